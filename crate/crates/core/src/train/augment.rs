//! Geometric augmentation: one affine transform (crop, scale, rotation)
//! applied identically to every frame of a clip and to its label maps.
//! Frames are resampled bilinearly with zero fill outside the source;
//! labels use nearest-neighbour lookup with the ignore id outside.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{LabelMap, VideoClip};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugProfile {
    pub enabled: bool,
    /// Fraction of the source extent kept by the crop.
    pub crop: (f64, f64),
    /// Zoom factor range (>1 zooms in).
    pub scale: (f64, f64),
    /// Rotation range in degrees, symmetric around zero.
    pub rotate_deg: f64,
    /// Output size (h, w); None keeps the input size. The contrast stage
    /// uses an aggressive crop resized to a smaller fixed target.
    pub out_size: Option<(usize, usize)>,
}

impl AugProfile {
    pub fn identity() -> AugProfile {
        AugProfile { enabled: false, crop: (1.0, 1.0), scale: (1.0, 1.0), rotate_deg: 0.0, out_size: None }
    }

    pub fn standard() -> AugProfile {
        AugProfile { enabled: true, crop: (0.85, 1.0), scale: (0.9, 1.15), rotate_deg: 12.0, out_size: None }
    }

    pub fn aggressive(out: (usize, usize)) -> AugProfile {
        AugProfile { enabled: true, crop: (0.5, 0.95), scale: (0.9, 1.2), rotate_deg: 12.0, out_size: Some(out) }
    }
}

/// Affine map from output pixels to source coordinates.
#[derive(Clone, Debug)]
pub struct Transform {
    pub out_h: usize,
    pub out_w: usize,
    cy: f64,
    cx: f64,
    ch: f64,
    cw: f64,
    cos: f64,
    sin: f64,
}

impl Transform {
    pub fn identity(h: usize, w: usize) -> Transform {
        Transform {
            out_h: h,
            out_w: w,
            cy: h as f64 / 2.0,
            cx: w as f64 / 2.0,
            ch: h as f64,
            cw: w as f64,
            cos: 1.0,
            sin: 0.0,
        }
    }

    pub fn rotation(deg: f64, h: usize, w: usize) -> Transform {
        let rad = deg.to_radians();
        Transform { cos: rad.cos(), sin: rad.sin(), ..Transform::identity(h, w) }
    }

    /// Draw a random transform for a (h, w) source under the profile.
    pub fn sample<R: Rng>(profile: &AugProfile, h: usize, w: usize, rng: &mut R) -> Transform {
        let (out_h, out_w) = profile.out_size.unwrap_or((h, w));
        if !profile.enabled {
            return Transform { out_h, out_w, ..Transform::identity(h, w) };
        }
        let crop = rng.gen_range(profile.crop.0..=profile.crop.1);
        let zoom = rng.gen_range(profile.scale.0..=profile.scale.1);
        let deg = rng.gen_range(-profile.rotate_deg..=profile.rotate_deg);
        let rad = deg.to_radians();
        let ch = crop * h as f64 / zoom;
        let cw = crop * w as f64 / zoom;
        let pick = |extent: f64, full: f64, rng: &mut R| -> f64 {
            let lo = extent / 2.0;
            let hi = full - extent / 2.0;
            if lo < hi {
                rng.gen_range(lo..hi)
            } else {
                full / 2.0
            }
        };
        let cy = pick(ch, h as f64, rng);
        let cx = pick(cw, w as f64, rng);
        Transform { out_h, out_w, cy, cx, ch, cw, cos: rad.cos(), sin: rad.sin() }
    }

    /// Source coordinates for the centre of output pixel (oy, ox).
    fn source_of(&self, oy: usize, ox: usize) -> (f64, f64) {
        let u = (ox as f64 + 0.5) / self.out_w as f64 - 0.5;
        let v = (oy as f64 + 0.5) / self.out_h as f64 - 0.5;
        let sx = self.cx + u * self.cw * self.cos - v * self.ch * self.sin;
        let sy = self.cy + u * self.cw * self.sin + v * self.ch * self.cos;
        (sy, sx)
    }

    pub fn apply_labels(&self, labels: &LabelMap, ignore: u8) -> LabelMap {
        let mut out = LabelMap::filled(self.out_h, self.out_w, ignore);
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let (sy, sx) = self.source_of(oy, ox);
                let (iy, ix) = (sy.floor(), sx.floor());
                if iy >= 0.0 && ix >= 0.0 && (iy as usize) < labels.h && (ix as usize) < labels.w {
                    out.set(oy, ox, labels.get(iy as usize, ix as usize));
                }
            }
        }
        out
    }

    /// Bilinear resample of an [H,W,C] frame; outside taps contribute zero.
    pub fn apply_frame(&self, frame: &Tensor) -> Tensor {
        let (h, w, c) = (frame.shape()[0], frame.shape()[1], frame.shape()[2]);
        let data = frame.data();
        let mut out = vec![0.0; self.out_h * self.out_w * c];
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let (sy, sx) = self.source_of(oy, ox);
                let (fy, fx) = (sy - 0.5, sx - 0.5);
                let (y0, x0) = (fy.floor(), fx.floor());
                let (wy, wx) = (fy - y0, fx - x0);
                let dst = (oy * self.out_w + ox) * c;
                for (dy, dx, wgt) in [
                    (0.0, 0.0, (1.0 - wy) * (1.0 - wx)),
                    (0.0, 1.0, (1.0 - wy) * wx),
                    (1.0, 0.0, wy * (1.0 - wx)),
                    (1.0, 1.0, wy * wx),
                ] {
                    let (ty, tx) = (y0 + dy, x0 + dx);
                    if ty >= 0.0 && tx >= 0.0 && (ty as usize) < h && (tx as usize) < w {
                        let src = (ty as usize * w + tx as usize) * c;
                        for ch in 0..c {
                            out[dst + ch] += wgt * data[src + ch];
                        }
                    }
                }
            }
        }
        Tensor::from_vec(&[self.out_h, self.out_w, c], out)
    }
}

/// Augment a frame/label pair, retrying degenerate transforms (no labeled
/// pixel left) a few times before falling back to the neutral transform.
pub fn augment_frame<R: Rng>(
    frame: &Tensor,
    labels: &LabelMap,
    profile: &AugProfile,
    ignore: u8,
    rng: &mut R,
) -> (Tensor, LabelMap) {
    if !profile.enabled && profile.out_size.is_none() {
        return (frame.detach(), labels.clone());
    }
    let (h, w) = (labels.h, labels.w);
    for _ in 0..8 {
        let t = Transform::sample(profile, h, w, rng);
        let lab = t.apply_labels(labels, ignore);
        if lab.labeled_count(ignore) > 0 {
            return (t.apply_frame(frame), lab);
        }
    }
    let t = Transform { out_h: profile.out_size.map_or(h, |s| s.0), out_w: profile.out_size.map_or(w, |s| s.1), ..Transform::identity(h, w) };
    (t.apply_frame(frame), t.apply_labels(labels, ignore))
}

/// Apply one shared random transform to every frame and label map of a clip.
pub fn augment_clip<R: Rng>(
    clip: &VideoClip,
    profile: &AugProfile,
    ignore: u8,
    rng: &mut R,
) -> VideoClip {
    if !profile.enabled && profile.out_size.is_none() {
        return VideoClip {
            frames: clip.frames.iter().map(|f| f.detach()).collect(),
            labels: clip.labels.clone(),
            video_index: clip.video_index,
            start: clip.start,
            t_end: clip.t_end,
        };
    }
    let (h, w) = (clip.labels[0].h, clip.labels[0].w);
    let mut chosen = None;
    for _ in 0..8 {
        let t = Transform::sample(profile, h, w, rng);
        if t.apply_labels(clip.last_labels(), ignore).labeled_count(ignore) > 0 {
            chosen = Some(t);
            break;
        }
    }
    let t = chosen.unwrap_or(Transform {
        out_h: profile.out_size.map_or(h, |s| s.0),
        out_w: profile.out_size.map_or(w, |s| s.1),
        ..Transform::identity(h, w)
    });
    VideoClip {
        frames: clip.frames.iter().map(|f| t.apply_frame(f)).collect(),
        labels: clip.labels.iter().map(|l| t.apply_labels(l, ignore)).collect(),
        video_index: clip.video_index,
        start: clip.start,
        t_end: clip.t_end,
    }
}
