//! The time-shift schedule: which two frames share a block, layer by layer.
//!
//! Only two timesteps ever enter one block. Pairing A couples (0,1),(2,3),…;
//! pairing B couples (1,2),(3,4),…, leaving frame 0 (and the last frame,
//! when unpaired) as singletons that pass through the same block alone.
//! Alternating A,B,A,… and ending on A propagates information by one frame
//! per configuration, so after the full schedule every frame's receptive
//! field covers the whole clip.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pairing {
    A,
    B,
}

/// One configuration: disjoint adjacent pairs plus leftover singletons.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairConfig {
    pub pairing: Pairing,
    pub pairs: Vec<(usize, usize)>,
    pub singletons: Vec<usize>,
}

impl PairConfig {
    fn for_pairing(pairing: Pairing, n: usize) -> PairConfig {
        let start = match pairing {
            Pairing::A => 0,
            Pairing::B => 1,
        };
        let mut pairs = Vec::new();
        let mut covered = vec![false; n];
        let mut a = start;
        while a + 1 < n {
            pairs.push((a, a + 1));
            covered[a] = true;
            covered[a + 1] = true;
            a += 2;
        }
        let singletons = (0..n).filter(|&i| !covered[i]).collect();
        PairConfig { pairing, pairs, singletons }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeShiftSchedule {
    pub clip_len: usize,
    pub configs: Vec<PairConfig>,
}

impl TimeShiftSchedule {
    /// Number of time shifts (transitions between configurations).
    pub fn shifts(&self) -> usize {
        self.configs.len() - 1
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// Predicted frame-to-frame dependency pattern: which input frames can
    /// influence each output frame after running `configs`. Row t lists the
    /// inputs reachable from output frame t.
    pub fn simulate_dependency(&self) -> Vec<Vec<bool>> {
        let n = self.clip_len;
        let mut dep: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..n).map(|j| i == j).collect())
            .collect();
        for cfg in &self.configs {
            for &(a, b) in &cfg.pairs {
                let merged: Vec<bool> =
                    (0..n).map(|j| dep[a][j] || dep[b][j]).collect();
                dep[a] = merged.clone();
                dep[b] = merged;
            }
        }
        dep
    }
}

/// Build the schedule for a clip of `n` frames.
///
/// Configurations alternate A,B,A,… and both start and end with A so the
/// clip returns to its original pairing. An even clip needs N-1
/// configurations (N-2 shifts); an odd clip needs one extra configuration
/// to make every frame's receptive field cover the whole clip, because the
/// final A pass is what feeds the last singleton back in.
pub fn time_shift_schedule(n: usize) -> TimeShiftSchedule {
    assert!(n >= 1, "clip length must be at least 1");
    if n == 1 {
        return TimeShiftSchedule {
            clip_len: 1,
            configs: vec![PairConfig { pairing: Pairing::A, pairs: vec![], singletons: vec![0] }],
        };
    }
    let count = if n.is_multiple_of(2) { n - 1 } else { n };
    let configs = (0..count)
        .map(|i| {
            PairConfig::for_pairing(if i % 2 == 0 { Pairing::A } else { Pairing::B }, n)
        })
        .collect();
    TimeShiftSchedule { clip_len: n, configs }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_of_four_matches_expected_layout() {
        let s = time_shift_schedule(4);
        assert_eq!(s.len(), 3);
        assert_eq!(s.shifts(), 2);
        assert_eq!(s.configs[0].pairing, Pairing::A);
        assert_eq!(s.configs[0].pairs, vec![(0, 1), (2, 3)]);
        assert!(s.configs[0].singletons.is_empty());
        assert_eq!(s.configs[1].pairing, Pairing::B);
        assert_eq!(s.configs[1].pairs, vec![(1, 2)]);
        assert_eq!(s.configs[1].singletons, vec![0, 3]);
        assert_eq!(s.configs[2], s.configs[0]);
    }

    #[test]
    fn clip_of_eight_needs_six_shifts() {
        let s = time_shift_schedule(8);
        assert_eq!(s.len(), 7);
        assert_eq!(s.shifts(), 6);
    }

    #[test]
    fn single_frame_is_one_singleton_configuration() {
        let s = time_shift_schedule(1);
        assert_eq!(s.len(), 1);
        assert!(s.configs[0].pairs.is_empty());
        assert_eq!(s.configs[0].singletons, vec![0]);
    }

    #[test]
    fn starts_and_ends_with_pairing_a() {
        for n in 2..=9 {
            let s = time_shift_schedule(n);
            assert_eq!(s.configs.first().unwrap().pairing, Pairing::A, "n={n}");
            assert_eq!(s.configs.last().unwrap().pairing, Pairing::A, "n={n}");
        }
    }

    #[test]
    fn full_schedule_reaches_every_frame() {
        for n in 1..=8 {
            let dep = time_shift_schedule(n).simulate_dependency();
            for (i, row) in dep.iter().enumerate() {
                for (j, &reach) in row.iter().enumerate() {
                    assert!(reach, "n={n}: frame {i} misses input {j}");
                }
            }
        }
    }

    #[test]
    fn truncated_schedule_is_banded() {
        let mut s = time_shift_schedule(4);
        s.configs.truncate(1);
        let dep = s.simulate_dependency();
        let expect = [
            [true, true, false, false],
            [true, true, false, false],
            [false, false, true, true],
            [false, false, true, true],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(dep[i][j], expect[i][j]);
            }
        }
    }

    #[test]
    #[should_panic(expected = "at least 1")]
    fn zero_length_clip_panics() {
        let _ = time_shift_schedule(0);
    }
}
