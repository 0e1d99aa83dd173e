//! Synthetic surgical-like video generator: textured shapes drifting over a
//! textured background, with a long-tailed class distribution, per-video
//! palette jitter (cross-video appearance variance), and per-frame speckle
//! noise and brightness flicker (temporal variance within a video).
//!
//! Generation is split into planning (shape tracks, palettes; pure in the
//! seed) and rendering, so tests can re-render a frame's labels from its
//! plan and compare against the stored mask.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loader::{Manifest, Splits, VideoEntry};
use super::pnm::{write_pgm, write_ppm};
use super::DataError;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SynthConfig {
    pub num_videos: usize,
    pub frames_per_video: usize,
    pub height: usize,
    pub width: usize,
    /// Total classes including background class 0.
    pub num_classes: usize,
    pub train_videos: usize,
    pub val_videos: usize,
    pub test_videos: usize,
    /// Shape speed range in pixels per frame.
    pub speed: (f64, f64),
    /// Per-video uniform colour offset amplitude.
    pub palette_jitter: f64,
    /// Per-frame i.i.d. speckle amplitude.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            num_videos: 8,
            frames_per_video: 60,
            height: 64,
            width: 48,
            num_classes: 5,
            train_videos: 5,
            val_videos: 1,
            test_videos: 2,
            speed: (0.3, 1.1),
            palette_jitter: 0.14,
            noise: 0.2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.num_classes < 3 {
            return Err(DataError::Config(
                "need at least 3 classes (background, a majority and a rare class)".into(),
            ));
        }
        if self.num_classes > 16 {
            return Err(DataError::Config("at most 16 classes supported".into()));
        }
        if self.train_videos + self.val_videos + self.test_videos != self.num_videos {
            return Err(DataError::Config(format!(
                "splits {}+{}+{} do not sum to {} videos",
                self.train_videos, self.val_videos, self.test_videos, self.num_videos
            )));
        }
        if self.num_videos == 0 || self.frames_per_video == 0 {
            return Err(DataError::Config("empty dataset".into()));
        }
        if self.height < 16 || self.width < 16 {
            return Err(DataError::Config("frames must be at least 16x16".into()));
        }
        Ok(())
    }

    /// Long-tailed target pixel share per foreground class (class 1 first).
    /// The tail classes fall below 5% of the frame.
    pub fn target_shares(&self) -> Vec<f64> {
        (0..self.num_classes - 1).map(|i| 0.22 * 0.42f64.powi(i as i32)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Disc,
    Square,
    Triangle,
    Ring,
}

const KINDS: [ShapeKind; 4] = [ShapeKind::Disc, ShapeKind::Square, ShapeKind::Triangle, ShapeKind::Ring];

#[derive(Clone, Debug)]
pub struct ShapeTrack {
    pub class: u8,
    pub kind: ShapeKind,
    /// Characteristic radius in pixels.
    pub size: f64,
    /// Center position per frame.
    pub centers: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct BgParams {
    pub base: [f64; 3],
    pub freq: (f64, f64, f64, f64),
    pub phase: (f64, f64),
}

/// Everything needed to render one video deterministically.
#[derive(Clone, Debug)]
pub struct VideoPlan {
    pub video: usize,
    pub h: usize,
    pub w: usize,
    pub frames: usize,
    pub palette: Vec<[f64; 3]>,
    pub bg: BgParams,
    pub shapes: Vec<ShapeTrack>,
}

fn sub_rng(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((a << 32) | b);
    rng
}

const BASE_COLORS: [[f64; 3]; 16] = [
    [0.78, 0.32, 0.30],
    [0.30, 0.70, 0.38],
    [0.86, 0.76, 0.30],
    [0.42, 0.40, 0.86],
    [0.80, 0.44, 0.76],
    [0.36, 0.76, 0.78],
    [0.85, 0.55, 0.25],
    [0.55, 0.30, 0.60],
    [0.60, 0.80, 0.45],
    [0.35, 0.50, 0.80],
    [0.75, 0.65, 0.55],
    [0.50, 0.65, 0.30],
    [0.70, 0.35, 0.50],
    [0.30, 0.60, 0.60],
    [0.65, 0.50, 0.80],
    [0.55, 0.55, 0.55],
];

/// Lay out shape tracks and appearance for a video. Pure in (seed, video).
pub fn plan_video(cfg: &SynthConfig, video: usize) -> VideoPlan {
    let mut rng = sub_rng(cfg.seed, 1, video as u64);
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    let jitter = cfg.palette_jitter;
    let mut palette = Vec::with_capacity(cfg.num_classes);
    // Background colour first (class 0), then one colour per shape class.
    let bg_base = [0.20, 0.19, 0.23];
    let jittered = |base: &[f64; 3], rng: &mut ChaCha8Rng| -> [f64; 3] {
        let mut c = [0.0; 3];
        for (i, v) in base.iter().enumerate() {
            c[i] = (v + rng.gen_range(-jitter..=jitter)).clamp(0.05, 0.95);
        }
        c
    };
    palette.push(jittered(&bg_base, &mut rng));
    for i in 0..cfg.num_classes - 1 {
        palette.push(jittered(&BASE_COLORS[i % BASE_COLORS.len()], &mut rng));
    }

    let bg = BgParams {
        base: palette[0],
        freq: (
            rng.gen_range(1.0..2.5),
            rng.gen_range(1.0..2.5),
            rng.gen_range(2.5..4.5),
            rng.gen_range(2.5..4.5),
        ),
        phase: (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU)),
    };

    let shares = cfg.target_shares();
    let mut shapes = Vec::with_capacity(cfg.num_classes - 1);
    for (i, share) in shares.iter().enumerate() {
        let class = (i + 1) as u8;
        let kind = KINDS[i % KINDS.len()];
        let area = share * h * w;
        let size = match kind {
            ShapeKind::Disc => (area / std::f64::consts::PI).sqrt(),
            ShapeKind::Square => area.sqrt() / 2.0,
            ShapeKind::Triangle => (area / 2.0).sqrt(),
            ShapeKind::Ring => (area / (std::f64::consts::PI * (1.0 - 0.55f64.powi(2)))).sqrt(),
        };
        // Bounce margin allows shapes to hang partly off the frame so label
        // clipping is exercised.
        let margin = 0.6 * size;
        let mut cy = rng.gen_range(margin..(h - margin).max(margin + 1e-9));
        let mut cx = rng.gen_range(margin..(w - margin).max(margin + 1e-9));
        let speed = rng.gen_range(cfg.speed.0..=cfg.speed.1);
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let (mut vy, mut vx) = (speed * angle.sin(), speed * angle.cos());
        let mut centers = Vec::with_capacity(cfg.frames_per_video);
        for _ in 0..cfg.frames_per_video {
            centers.push((cy, cx));
            cy += vy;
            cx += vx;
            if cy < margin || cy > h - margin {
                vy = -vy;
                cy = cy.clamp(margin, h - margin);
            }
            if cx < margin || cx > w - margin {
                vx = -vx;
                cx = cx.clamp(margin, w - margin);
            }
        }
        shapes.push(ShapeTrack { class, kind, size, centers });
    }

    VideoPlan { video, h: cfg.height, w: cfg.width, frames: cfg.frames_per_video, palette, bg, shapes }
}

fn inside(kind: ShapeKind, size: f64, dy: f64, dx: f64) -> bool {
    match kind {
        ShapeKind::Disc => dy * dy + dx * dx <= size * size,
        ShapeKind::Square => dy.abs() <= size && dx.abs() <= size,
        ShapeKind::Triangle => dy.abs() <= size && dx.abs() <= (dy + size) / 2.0,
        ShapeKind::Ring => {
            let d2 = dy * dy + dx * dx;
            d2 <= size * size && d2 > (0.55 * size) * (0.55 * size)
        }
    }
}

/// Exact label mask for one frame from the plan's geometry. Rarer (higher)
/// classes are drawn on top.
pub fn render_labels(plan: &VideoPlan, t: usize) -> Vec<u8> {
    let (h, w) = (plan.h, plan.w);
    let mut labels = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            for shape in plan.shapes.iter().rev() {
                let (cy, cx) = shape.centers[t];
                if inside(shape.kind, shape.size, py - cy, px - cx) {
                    labels[y * w + x] = shape.class;
                    break;
                }
            }
        }
    }
    labels
}

/// Render a frame of the video: 8-bit RGB plus the exact label mask.
pub fn render_frame(cfg: &SynthConfig, plan: &VideoPlan, t: usize) -> (Vec<u8>, Vec<u8>) {
    let labels = render_labels(plan, t);
    let (h, w) = (plan.h, plan.w);
    let mut noise_rng = sub_rng(cfg.seed, 2, (plan.video as u64) << 24 | t as u64);
    let flicker: f64 = noise_rng.gen_range(-0.05..=0.05);
    let tau = std::f64::consts::TAU;
    let mut rgb = vec![0u8; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            let label = labels[y * w + x] as usize;
            let (fy, fx) = (y as f64 / h as f64, x as f64 / w as f64);
            let mut color = if label == 0 {
                let b = &plan.bg;
                let wave = 0.10 * (tau * (b.freq.0 * fx + b.freq.1 * fy) + b.phase.0).sin()
                    + 0.05 * (tau * (b.freq.2 * fx - b.freq.3 * fy) + b.phase.1).sin();
                [b.base[0] + wave, b.base[1] + wave, b.base[2] + wave]
            } else {
                let shape = &plan.shapes[label - 1];
                let (cy, cx) = shape.centers[t];
                let d = ((y as f64 + 0.5 - cy).powi(2) + (x as f64 + 0.5 - cx).powi(2)).sqrt();
                let shade = 0.78 + 0.4 * (d / shape.size).min(1.0);
                let base = plan.palette[label];
                [base[0] * shade, base[1] * shade, base[2] * shade]
            };
            for c in color.iter_mut() {
                *c += flicker + noise_rng.gen_range(-cfg.noise..=cfg.noise);
            }
            let o = (y * w + x) * 3;
            for c in 0..3 {
                rgb[o + c] = (color[c].clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
    }
    (rgb, labels)
}

/// Generate the full dataset under `root`: one directory per video with PPM
/// frames and PGM labels, plus `manifest.json`. Deterministic in the seed.
pub fn generate_synthetic(cfg: &SynthConfig, root: &Path) -> Result<(), DataError> {
    cfg.validate()?;
    std::fs::create_dir_all(root).map_err(|e| DataError::Io { path: root.display().to_string(), source: e })?;
    let mut videos = Vec::with_capacity(cfg.num_videos);
    for v in 0..cfg.num_videos {
        let id = format!("v{v:02}");
        let vdir = root.join(&id);
        std::fs::create_dir_all(&vdir)
            .map_err(|e| DataError::Io { path: vdir.display().to_string(), source: e })?;
        let plan = plan_video(cfg, v);
        let mut frames = Vec::with_capacity(cfg.frames_per_video);
        let mut labels = Vec::with_capacity(cfg.frames_per_video);
        for t in 0..cfg.frames_per_video {
            let (rgb, lab) = render_frame(cfg, &plan, t);
            let fpath = format!("{id}/f{t:04}.ppm");
            let lpath = format!("{id}/l{t:04}.pgm");
            write_ppm(&root.join(&fpath), cfg.width, cfg.height, &rgb)?;
            write_pgm(&root.join(&lpath), cfg.width, cfg.height, &lab)?;
            frames.push(fpath);
            labels.push(lpath);
        }
        videos.push(VideoEntry { id, frames, labels });
    }
    let ids: Vec<String> = videos.iter().map(|v| v.id.clone()).collect();
    let manifest = Manifest {
        height: cfg.height,
        width: cfg.width,
        num_classes: cfg.num_classes,
        ignore_id: super::IGNORE_ID,
        videos,
        splits: Splits {
            train: ids[..cfg.train_videos].to_vec(),
            val: ids[cfg.train_videos..cfg.train_videos + cfg.val_videos].to_vec(),
            test: ids[cfg.train_videos + cfg.val_videos..].to_vec(),
        },
    };
    manifest.save(&root.join("manifest.json"))
}
