//! CLEAR MOT evaluation (MOTA, MOTP, identity switches) plus
//! trajectory-level counts (mostly-tracked, fragmentations).
//!
//! Correspondences persist frame to frame: an existing ground-truth/track
//! pair still within the distance threshold is kept before the remaining
//! objects are matched by a minimum-total-distance assignment. A mismatch
//! is counted whenever a ground-truth object's corresponding track ID
//! changes relative to its most recent correspondence.

use std::collections::HashMap;

use thiserror::Error;

use crate::assignment::{CostMatrix, solve_best};

/// Ground-truth objects present in one frame: (id, x, y).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFrame {
    pub t: usize,
    pub objects: Vec<(u64, f64, f64)>,
}

/// Reported tracks in one frame: (id, x, y, confidence).
#[derive(Debug, Clone, PartialEq)]
pub struct TrackFrame {
    pub t: usize,
    pub tracks: Vec<(u64, f64, f64, f64)>,
}

/// Per-frame tallies underlying the aggregate scores.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameTally {
    /// Ground-truth object count g_t.
    pub gt: usize,
    /// Reported track count a_t.
    pub tracks: usize,
    /// Correct matches n_t.
    pub matches: usize,
    /// Mismatches (ID switches) m_t.
    pub mismatches: usize,
    /// Total match distance Σ d_t.
    pub distance: f64,
}

/// All matched (gt id, track id, distance) triples per frame; the
/// correspondence log that trajectory metrics consume.
pub type CorrespondenceLog = Vec<Vec<(u64, u64, f64)>>;

/// Aggregate CLEAR MOT report.
#[derive(Debug, Clone)]
pub struct MotReport {
    /// 1 - (misses + false positives + mismatches) / Σ g_t. At most 1; can
    /// go negative.
    pub mota: f64,
    /// 1 - mean match distance (meters), as a fraction.
    pub motp: f64,
    /// Total identity switches.
    pub ids: usize,
    /// Ground-truth trajectories tracked for at least 80% of their frames.
    pub mt: usize,
    /// Tracked-to-not-tracked transitions summed over trajectories.
    pub fm: usize,
    pub frames: Vec<FrameTally>,
    pub correspondences: CorrespondenceLog,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("frame {0} of ground truth and tracks are misaligned ({1} vs {2})")]
    Misaligned(usize, usize, usize),
    #[error("duplicate id {0} in frame {1}")]
    DuplicateId(u64, usize),
}

/// Evaluate tracker output against ground truth with the CLEAR MOT
/// protocol at the given match distance threshold (meters).
pub fn clear_mot(
    gt: &[GroundTruthFrame],
    tracks: &[TrackFrame],
    dist_threshold: f64,
) -> Result<MotReport, MetricsError> {
    if gt.len() != tracks.len() {
        return Err(MetricsError::Misaligned(0, gt.len(), tracks.len()));
    }
    let mut frames = Vec::with_capacity(gt.len());
    let mut correspondences: CorrespondenceLog = Vec::with_capacity(gt.len());
    // gt id -> track id currently (or most recently) corresponding.
    let mut current: HashMap<u64, u64> = HashMap::new();
    let mut last_seen: HashMap<u64, u64> = HashMap::new();
    let mut ids_total = 0usize;

    for (gf, tf) in gt.iter().zip(tracks) {
        if gf.t != tf.t {
            return Err(MetricsError::Misaligned(gf.t, gf.t, tf.t));
        }
        check_unique(gf.objects.iter().map(|o| o.0), gf.t)?;
        check_unique(tf.tracks.iter().map(|o| o.0), tf.t)?;

        let dist = |g: &(u64, f64, f64), h: &(u64, f64, f64, f64)| -> f64 {
            ((g.1 - h.1).powi(2) + (g.2 - h.2).powi(2)).sqrt()
        };
        let track_by_id: HashMap<u64, &(u64, f64, f64, f64)> =
            tf.tracks.iter().map(|tr| (tr.0, tr)).collect();

        // Keep still-valid correspondences from the previous frame.
        let mut matched: Vec<(u64, u64, f64)> = Vec::new();
        let mut used_tracks: Vec<u64> = Vec::new();
        let mut unmatched_gt: Vec<&(u64, f64, f64)> = Vec::new();
        for g in &gf.objects {
            let kept = current.get(&g.0).and_then(|tid| {
                track_by_id.get(tid).and_then(|tr| {
                    let d = dist(g, tr);
                    (d <= dist_threshold).then_some((*tid, d))
                })
            });
            match kept {
                Some((tid, d)) => {
                    matched.push((g.0, tid, d));
                    used_tracks.push(tid);
                }
                None => unmatched_gt.push(g),
            }
        }

        // Assign the remainder by minimum total distance under the
        // threshold.
        let free_tracks: Vec<&(u64, f64, f64, f64)> = tf
            .tracks
            .iter()
            .filter(|tr| !used_tracks.contains(&tr.0))
            .collect();
        if !unmatched_gt.is_empty() && !free_tracks.is_empty() {
            let n = unmatched_gt.len().max(free_tracks.len());
            // Forbidden pairs get a cost so large that real matches always
            // dominate; padded rows/columns cost the same.
            let big = 1e9;
            let costs = CostMatrix::from_fn(n, |i, j| {
                if i < unmatched_gt.len() && j < free_tracks.len() {
                    let d = dist(unmatched_gt[i], free_tracks[j]);
                    if d <= dist_threshold { d } else { big }
                } else {
                    big
                }
            })
            .expect("finite cost matrix");
            let solution = solve_best(&costs).expect("padded problem is feasible");
            for (i, &j) in solution.mapping.iter().enumerate() {
                if i < unmatched_gt.len() && j < free_tracks.len() {
                    let g = unmatched_gt[i];
                    let tr = free_tracks[j];
                    let d = dist(g, tr);
                    if d <= dist_threshold {
                        matched.push((g.0, tr.0, d));
                    }
                }
            }
        }

        // Count mismatches: a gt object whose correspondence differs from
        // its most recent one.
        let mut mismatches = 0usize;
        for &(gid, tid, _) in &matched {
            if let Some(&prev) = last_seen.get(&gid)
                && prev != tid
            {
                mismatches += 1;
            }
            last_seen.insert(gid, tid);
            current.insert(gid, tid);
        }
        // Drop current correspondences for gt objects that vanished or went
        // unmatched this frame (last_seen keeps the history for switches).
        let matched_ids: Vec<u64> = matched.iter().map(|m| m.0).collect();
        current.retain(|gid, _| matched_ids.contains(gid));

        ids_total += mismatches;
        frames.push(FrameTally {
            gt: gf.objects.len(),
            tracks: tf.tracks.len(),
            matches: matched.len(),
            mismatches,
            distance: matched.iter().map(|m| m.2).sum(),
        });
        correspondences.push(matched);
    }

    let sum_g: usize = frames.iter().map(|f| f.gt).sum();
    let sum_n: usize = frames.iter().map(|f| f.matches).sum();
    let sum_d: f64 = frames.iter().map(|f| f.distance).sum();
    let error_sum: f64 = frames
        .iter()
        .map(|f| (f.gt + f.tracks + f.mismatches) as f64 - 2.0 * f.matches as f64)
        .sum();
    let mota = if sum_g > 0 {
        1.0 - error_sum / sum_g as f64
    } else {
        1.0
    };
    let motp = if sum_n > 0 {
        1.0 - sum_d / sum_n as f64
    } else {
        1.0
    };
    let (mt, fm) = trajectory_metrics(gt, &correspondences);
    Ok(MotReport {
        mota,
        motp,
        ids: ids_total,
        mt,
        fm,
        frames,
        correspondences,
    })
}

fn check_unique(ids: impl Iterator<Item = u64>, t: usize) -> Result<(), MetricsError> {
    let mut seen = Vec::new();
    for id in ids {
        if seen.contains(&id) {
            return Err(MetricsError::DuplicateId(id, t));
        }
        seen.push(id);
    }
    Ok(())
}

/// Mostly-tracked count (trajectories matched in at least 80% of their
/// frames) and fragmentation count (tracked-to-not-tracked transitions).
pub fn trajectory_metrics(
    gt: &[GroundTruthFrame],
    correspondences: &CorrespondenceLog,
) -> (usize, usize) {
    // Per gt id: the tracked flag on each frame of its lifespan.
    let mut status: HashMap<u64, Vec<bool>> = HashMap::new();
    for (gf, matched) in gt.iter().zip(correspondences) {
        for g in &gf.objects {
            let tracked = matched.iter().any(|m| m.0 == g.0);
            status.entry(g.0).or_default().push(tracked);
        }
    }
    let mut mt = 0usize;
    let mut fm = 0usize;
    for flags in status.values() {
        let tracked = flags.iter().filter(|&&f| f).count();
        if tracked as f64 >= 0.8 * flags.len() as f64 {
            mt += 1;
        }
        for w in flags.windows(2) {
            if w[0] && !w[1] {
                fm += 1;
            }
        }
    }
    (mt, fm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gt_frame(t: usize, objects: &[(u64, f64, f64)]) -> GroundTruthFrame {
        GroundTruthFrame {
            t,
            objects: objects.to_vec(),
        }
    }

    fn tr_frame(t: usize, tracks: &[(u64, f64, f64)]) -> TrackFrame {
        TrackFrame {
            t,
            tracks: tracks.iter().map(|&(id, x, y)| (id, x, y, 1.0)).collect(),
        }
    }

    #[test]
    fn perfect_tracking() {
        let gt = vec![
            gt_frame(0, &[(1, 0.0, 0.0), (2, 5.0, 5.0)]),
            gt_frame(1, &[(1, 0.5, 0.0), (2, 5.0, 5.5)]),
            gt_frame(2, &[(1, 1.0, 0.0), (2, 5.0, 6.0)]),
        ];
        let tr = vec![
            tr_frame(0, &[(10, 0.0, 0.0), (20, 5.0, 5.0)]),
            tr_frame(1, &[(10, 0.5, 0.0), (20, 5.0, 5.5)]),
            tr_frame(2, &[(10, 1.0, 0.0), (20, 5.0, 6.0)]),
        ];
        let r = clear_mot(&gt, &tr, 1.0).unwrap();
        assert_eq!(r.mota, 1.0);
        assert_eq!(r.motp, 1.0);
        assert_eq!(r.ids, 0);
        assert_eq!(r.mt, 2);
        assert_eq!(r.fm, 0);
    }

    #[test]
    fn one_miss_gives_three_quarters_mota() {
        // Σg = 4 over two frames, one miss, no false positives or switches.
        let gt = vec![
            gt_frame(0, &[(1, 0.0, 0.0), (2, 5.0, 5.0)]),
            gt_frame(1, &[(1, 0.0, 0.0), (2, 5.0, 5.0)]),
        ];
        let tr = vec![
            tr_frame(0, &[(10, 0.0, 0.0), (20, 5.0, 5.0)]),
            tr_frame(1, &[(10, 0.0, 0.0)]),
        ];
        let r = clear_mot(&gt, &tr, 1.0).unwrap();
        assert!((r.mota - 0.75).abs() < 1e-12);
        assert_eq!(r.motp, 1.0);
        assert_eq!(r.ids, 0);
        assert_eq!(r.mt, 1);
        assert_eq!(r.fm, 1);
    }

    #[test]
    fn quarter_meter_matches_give_motp() {
        let gt = vec![gt_frame(0, &[(1, 0.0, 0.0)]), gt_frame(1, &[(1, 0.0, 0.0)])];
        let tr = vec![
            tr_frame(0, &[(10, 0.25, 0.0)]),
            tr_frame(1, &[(10, 0.0, 0.25)]),
        ];
        let r = clear_mot(&gt, &tr, 1.0).unwrap();
        assert!((r.motp - 0.75).abs() < 1e-12);
        assert_eq!(r.mota, 1.0);
    }

    #[test]
    fn id_swap_counts_once() {
        let gt = vec![
            gt_frame(0, &[(1, 0.0, 0.0)]),
            gt_frame(1, &[(1, 0.0, 0.0)]),
            gt_frame(2, &[(1, 0.0, 0.0)]),
        ];
        let tr = vec![
            tr_frame(0, &[(7, 0.0, 0.0)]),
            tr_frame(1, &[(8, 0.0, 0.0)]),
            tr_frame(2, &[(8, 0.0, 0.0)]),
        ];
        let r = clear_mot(&gt, &tr, 1.0).unwrap();
        assert_eq!(r.ids, 1);
        assert!((r.mota - (1.0 - 1.0 / 3.0)).abs() < 1e-12);
        assert_eq!(r.motp, 1.0);
        assert_eq!(r.mt, 1);
        assert_eq!(r.fm, 0);
    }

    #[test]
    fn switch_after_gap_still_counts() {
        let gt = vec![
            gt_frame(0, &[(1, 0.0, 0.0)]),
            gt_frame(1, &[(1, 0.0, 0.0)]),
            gt_frame(2, &[(1, 0.0, 0.0)]),
        ];
        // Tracked by 7, lost, then reacquired by 9.
        let tr = vec![
            tr_frame(0, &[(7, 0.0, 0.0)]),
            tr_frame(1, &[]),
            tr_frame(2, &[(9, 0.0, 0.0)]),
        ];
        let r = clear_mot(&gt, &tr, 1.0).unwrap();
        assert_eq!(r.ids, 1);
    }

    #[test]
    fn carried_correspondence_beats_a_closer_newcomer() {
        // Track 7 stays within threshold, so it keeps the match even when
        // track 9 is closer in frame 1.
        let gt = vec![gt_frame(0, &[(1, 0.0, 0.0)]), gt_frame(1, &[(1, 0.0, 0.0)])];
        let tr = vec![
            tr_frame(0, &[(7, 0.1, 0.0)]),
            tr_frame(1, &[(7, 0.6, 0.0), (9, 0.05, 0.0)]),
        ];
        let r = clear_mot(&gt, &tr, 1.0).unwrap();
        assert_eq!(r.ids, 0);
        assert_eq!(r.correspondences[1][0].1, 7);
    }

    #[test]
    fn trajectory_examples() {
        // Tracked in frames 0..6 of 10: 70% < 80%, one fragmentation.
        let gt: Vec<GroundTruthFrame> =
            (0..10).map(|t| gt_frame(t, &[(1, 0.0, 0.0)])).collect();
        let tr: Vec<TrackFrame> = (0..10)
            .map(|t| {
                if t < 7 {
                    tr_frame(t, &[(5, 0.0, 0.0)])
                } else {
                    tr_frame(t, &[])
                }
            })
            .collect();
        let r = clear_mot(&gt, &tr, 1.0).unwrap();
        assert_eq!(r.mt, 0);
        assert_eq!(r.fm, 1);

        // Pattern T,T,F,T,F,T has two tracked-to-not-tracked transitions.
        let pattern = [true, true, false, true, false, true];
        let gt: Vec<GroundTruthFrame> =
            (0..6).map(|t| gt_frame(t, &[(1, 0.0, 0.0)])).collect();
        let tr: Vec<TrackFrame> = pattern
            .iter()
            .enumerate()
            .map(|(t, &on)| {
                if on {
                    tr_frame(t, &[(5, 0.0, 0.0)])
                } else {
                    tr_frame(t, &[])
                }
            })
            .collect();
        let r = clear_mot(&gt, &tr, 1.0).unwrap();
        assert_eq!(r.fm, 2);
    }

    #[test]
    fn pure_false_positive_track_lowers_mota_not_motp() {
        let gt = vec![gt_frame(0, &[(1, 0.0, 0.0)]), gt_frame(1, &[(1, 0.0, 0.0)])];
        let clean = vec![
            tr_frame(0, &[(7, 0.2, 0.0)]),
            tr_frame(1, &[(7, 0.2, 0.0)]),
        ];
        let with_fp = vec![
            tr_frame(0, &[(7, 0.2, 0.0), (8, 14.0, 14.0)]),
            tr_frame(1, &[(7, 0.2, 0.0), (8, 14.0, 14.0)]),
        ];
        let a = clear_mot(&gt, &clean, 1.0).unwrap();
        let b = clear_mot(&gt, &with_fp, 1.0).unwrap();
        assert!(b.mota < a.mota);
        assert_eq!(a.motp, b.motp);
    }

    #[test]
    fn misaligned_frames_error() {
        let gt = vec![gt_frame(0, &[])];
        let tr = vec![TrackFrame {
            t: 1,
            tracks: vec![],
        }];
        assert_eq!(
            clear_mot(&gt, &tr, 1.0).unwrap_err(),
            MetricsError::Misaligned(0, 0, 1)
        );
    }

    #[test]
    fn empty_tracks_of_nonempty_gt_gives_zero_mota() {
        let gt = vec![gt_frame(0, &[(1, 0.0, 0.0)]), gt_frame(1, &[(1, 0.0, 0.0)])];
        let tr = vec![tr_frame(0, &[]), tr_frame(1, &[])];
        let r = clear_mot(&gt, &tr, 1.0).unwrap();
        assert_eq!(r.mota, 0.0);
    }

    proptest! {
        #[test]
        fn mota_is_invariant_under_track_relabeling(shift in 1u64..1000) {
            let gt = vec![
                gt_frame(0, &[(1, 0.0, 0.0), (2, 5.0, 5.0)]),
                gt_frame(1, &[(1, 0.3, 0.0), (2, 5.0, 5.2)]),
                gt_frame(2, &[(1, 0.6, 0.0), (2, 5.0, 5.4)]),
            ];
            let tr: Vec<TrackFrame> = vec![
                tr_frame(0, &[(3, 0.0, 0.1), (4, 5.1, 5.0)]),
                tr_frame(1, &[(4, 0.3, 0.1), (3, 5.1, 5.2)]),
                tr_frame(2, &[(4, 0.6, 0.1), (3, 5.1, 5.4)]),
            ];
            let relabeled: Vec<TrackFrame> = tr
                .iter()
                .map(|f| TrackFrame {
                    t: f.t,
                    tracks: f
                        .tracks
                        .iter()
                        .map(|&(id, x, y, c)| (id.wrapping_mul(2654435761).wrapping_add(shift), x, y, c))
                        .collect(),
                })
                .collect();
            let a = clear_mot(&gt, &tr, 1.0).unwrap();
            let b = clear_mot(&gt, &relabeled, 1.0).unwrap();
            prop_assert_eq!(a.mota, b.mota);
            prop_assert_eq!(a.motp, b.motp);
            prop_assert_eq!(a.ids, b.ids);
        }
    }
}
