//! Manifest-driven dataset loading with lazy, validated frame access.

use std::cell::RefCell;
use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pnm::{read_pgm, read_ppm};
use super::{DataError, LabelMap, VideoClip};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    pub frames: Vec<String>,
    pub labels: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub ignore_id: u8,
    pub videos: Vec<VideoEntry>,
    pub splits: Splits,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| DataError::Malformed { path: path.display().to_string(), detail: e.to_string() })?;
        std::fs::write(path, json)
            .map_err(|e| DataError::Io { path: path.display().to_string(), source: e })
    }

    pub fn load(path: &Path) -> Result<Manifest, DataError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DataError::Io { path: path.display().to_string(), source: e })?;
        serde_json::from_str(&text)
            .map_err(|e| DataError::Malformed { path: path.display().to_string(), detail: e.to_string() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One loaded frame: image in [0,1] as an [H,W,3] tensor plus its labels.
#[derive(Clone)]
pub struct LoadedFrame {
    pub image: Tensor,
    pub labels: LabelMap,
}

/// Read-only handle over an on-disk dataset. Frames are loaded and
/// validated on first touch, then cached.
pub struct Dataset {
    root: PathBuf,
    pub manifest: Manifest,
    split_indices: [Vec<usize>; 3],
    cache: RefCell<HashMap<(usize, usize), LoadedFrame>>,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Dataset, DataError> {
        let manifest = Manifest::load(&root.join("manifest.json"))?;
        let index_of: HashMap<&str, usize> =
            manifest.videos.iter().enumerate().map(|(i, v)| (v.id.as_str(), i)).collect();
        let resolve = |ids: &[String]| -> Result<Vec<usize>, DataError> {
            ids.iter()
                .map(|id| {
                    index_of.get(id.as_str()).copied().ok_or_else(|| DataError::Config(format!(
                        "split references unknown video id {id:?}"
                    )))
                })
                .collect()
        };
        for v in &manifest.videos {
            if v.frames.len() != v.labels.len() {
                return Err(DataError::Config(format!(
                    "video {:?} has {} frames but {} label maps",
                    v.id,
                    v.frames.len(),
                    v.labels.len()
                )));
            }
        }
        let split_indices = [
            resolve(&manifest.splits.train)?,
            resolve(&manifest.splits.val)?,
            resolve(&manifest.splits.test)?,
        ];
        Ok(Dataset { root: root.to_path_buf(), manifest, split_indices, cache: RefCell::new(HashMap::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn num_videos(&self) -> usize {
        self.manifest.videos.len()
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.num_classes
    }

    pub fn ignore_id(&self) -> u8 {
        self.manifest.ignore_id
    }

    pub fn videos(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.split_indices[0],
            Split::Val => &self.split_indices[1],
            Split::Test => &self.split_indices[2],
        }
    }

    pub fn video_len(&self, video: usize) -> usize {
        self.manifest.videos[video].frames.len()
    }

    pub fn video_id(&self, video: usize) -> &str {
        &self.manifest.videos[video].id
    }

    /// Load (or fetch from cache) one frame with validation.
    pub fn frame(&self, video: usize, t: usize) -> Result<LoadedFrame, DataError> {
        if let Some(hit) = self.cache.borrow().get(&(video, t)) {
            return Ok(hit.clone());
        }
        let entry = &self.manifest.videos[video];
        let fpath = self.root.join(&entry.frames[t]);
        let lpath = self.root.join(&entry.labels[t]);
        let (w, h, rgb) = read_ppm(&fpath)?;
        if (h, w) != (self.manifest.height, self.manifest.width) {
            return Err(DataError::Malformed {
                path: fpath.display().to_string(),
                detail: format!("frame is {h}x{w}, manifest says {}x{}", self.manifest.height, self.manifest.width),
            });
        }
        let (lw, lh, lab) = read_pgm(&lpath)?;
        if (lh, lw) != (h, w) {
            return Err(DataError::Malformed {
                path: lpath.display().to_string(),
                detail: format!("labels are {lh}x{lw}, frame is {h}x{w}"),
            });
        }
        for &v in &lab {
            if v != self.manifest.ignore_id && v as usize >= self.manifest.num_classes {
                return Err(DataError::LabelOutOfRange {
                    path: lpath.display().to_string(),
                    value: v,
                    num_classes: self.manifest.num_classes,
                    ignore: self.manifest.ignore_id,
                });
            }
        }
        let image = Tensor::from_vec(&[h, w, 3], rgb.iter().map(|&b| b as f64 / 255.0).collect());
        let loaded = LoadedFrame { image, labels: LabelMap::new(h, w, lab) };
        self.cache.borrow_mut().insert((video, t), loaded.clone());
        Ok(loaded)
    }

    /// Clip of `n` consecutive frames ending at `t_end`, left-padded by
    /// repeating the first frame when the video is too short.
    pub fn clip(&self, video: usize, t_end: usize, n: usize) -> Result<VideoClip, DataError> {
        assert!(n >= 1, "clip length must be >= 1");
        assert!(t_end < self.video_len(video), "t_end beyond video");
        let mut frames = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let start = t_end + 1 - n.min(t_end + 1);
        for i in 0..n {
            let t = (t_end as isize - (n - 1 - i) as isize).max(start as isize) as usize;
            let f = self.frame(video, t)?;
            frames.push(f.image);
            labels.push(f.labels);
        }
        Ok(VideoClip { frames, labels, video_index: video, start, t_end })
    }

    /// Re-encode every frame and label map back to disk under `dest` with
    /// the same relative paths and manifest.
    pub fn resave(&self, dest: &Path) -> Result<(), DataError> {
        std::fs::create_dir_all(dest)
            .map_err(|e| DataError::Io { path: dest.display().to_string(), source: e })?;
        for (vi, entry) in self.manifest.videos.iter().enumerate() {
            for t in 0..entry.frames.len() {
                let f = self.frame(vi, t)?;
                let (h, w) = (f.labels.h, f.labels.w);
                let img = f.image.to_vec();
                let rgb: Vec<u8> = img.iter().map(|v| (v * 255.0).round() as u8).collect();
                let fpath = dest.join(&entry.frames[t]);
                let lpath = dest.join(&entry.labels[t]);
                if let Some(parent) = fpath.parent() {
                    std::fs::create_dir_all(parent)
                        .map_err(|e| DataError::Io { path: parent.display().to_string(), source: e })?;
                }
                super::pnm::write_ppm(&fpath, w, h, &rgb)?;
                super::pnm::write_pgm(&lpath, w, h, &f.labels.data)?;
            }
        }
        self.manifest.save(&dest.join("manifest.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::super::synth::{generate_synthetic, SynthConfig};
    use super::*;

    fn tiny() -> SynthConfig {
        SynthConfig {
            num_videos: 2,
            frames_per_video: 4,
            height: 32,
            width: 24,
            num_classes: 4,
            train_videos: 1,
            val_videos: 0,
            test_videos: 1,
            seed: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn generate_load_resave_is_byte_identical() {
        let src = tempfile::tempdir().unwrap();
        let dst = tempfile::tempdir().unwrap();
        generate_synthetic(&tiny(), src.path()).unwrap();
        let ds = Dataset::load(src.path()).unwrap();
        ds.resave(dst.path()).unwrap();
        for entry in std::fs::read_dir(src.path().join("v00")).unwrap() {
            let p = entry.unwrap().path();
            let rel = p.strip_prefix(src.path()).unwrap();
            assert_eq!(
                std::fs::read(&p).unwrap(),
                std::fs::read(dst.path().join(rel)).unwrap(),
                "resave mismatch at {rel:?}"
            );
        }
    }

    #[test]
    fn empty_split_iterates_nothing() {
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic(&tiny(), dir.path()).unwrap();
        let ds = Dataset::load(dir.path()).unwrap();
        assert!(ds.videos(Split::Val).is_empty());
        assert_eq!(ds.videos(Split::Train).len(), 1);
    }

    #[test]
    fn short_video_clip_pads_with_first_frame() {
        let cfg = SynthConfig { frames_per_video: 2, ..tiny() };
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic(&cfg, dir.path()).unwrap();
        let ds = Dataset::load(dir.path()).unwrap();
        let clip = ds.clip(0, 1, 4).unwrap();
        assert_eq!(clip.len(), 4);
        assert_eq!(clip.start, 0);
        // First three possible source frames are 0,0,0,1 after padding.
        let f0 = clip.frames[0].to_vec();
        assert_eq!(clip.frames[1].to_vec(), f0);
        assert_eq!(clip.frames[2].to_vec(), f0);
        assert_ne!(clip.frames[3].to_vec(), f0);
    }

    #[test]
    fn corrupted_frame_is_a_named_load_error() {
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic(&tiny(), dir.path()).unwrap();
        std::fs::write(dir.path().join("v00/f0000.ppm"), b"garbage").unwrap();
        let ds = Dataset::load(dir.path()).unwrap();
        match ds.frame(0, 0) {
            Err(e) => assert!(e.to_string().contains("f0000.ppm"), "error should name the file: {e}"),
            Ok(_) => panic!("expected load error"),
        }
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic(&tiny(), dir.path()).unwrap();
        // Rewrite one label file with a bogus class id.
        let path = dir.path().join("v00/l0001.pgm");
        let (w, h, mut lab) = read_pgm(&path).unwrap();
        lab[0] = 200;
        super::super::pnm::write_pgm(&path, w, h, &lab).unwrap();
        let ds = Dataset::load(dir.path()).unwrap();
        assert!(matches!(ds.frame(0, 1), Err(DataError::LabelOutOfRange { value: 200, .. })));
    }
}
