//! Plain comma-separated file formats, one record per line with a required
//! header row.
//!
//! Detections: `frame,x,y,confidence[,bbox_area]` — confidence may be left
//! empty (a default is assigned on ingest) and the bbox column is optional.
//! Ground truth: `frame,gt_id,x,y`. Tracks: `frame,rho,x,y,vx,vy,confidence`
//! with 6-decimal fixed-point reals. Detections and ground truth are
//! written with shortest-round-trip floats so simulate → ingest is exact.

use std::path::Path;

use settrack::identify::Identity;
use settrack::metrics::{GroundTruthFrame, TrackFrame};
use settrack::models::{DEFAULT_CONFIDENCE, Detection, ModelParams};
use settrack::sim::Scenario;

use crate::CliError;

/// One raw detector record as read from file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDetectionRecord {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
    pub confidence: Option<f64>,
    pub bbox_area: Option<f64>,
}

fn data_err(path: &Path, lineno: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}:{}: {msg}", path.display(), lineno))
}

fn split_csv(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

/// Read raw detection records, validating field counts and ranges.
pub fn read_detections(path: &Path) -> Result<Vec<RawDetectionRecord>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{}: empty file, header required", path.display())))?;
    let cols = split_csv(header);
    let has_conf = cols.len() >= 4;
    let has_bbox = cols.len() >= 5;
    if cols.len() < 3 || cols[0] != "frame" || cols[1] != "x" || cols[2] != "y" {
        return Err(data_err(
            path,
            1,
            "header must start with `frame,x,y[,confidence[,bbox_area]]`",
        ));
    }

    let mut out = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_csv(line);
        if fields.len() != cols.len() {
            return Err(data_err(
                path,
                lineno,
                format!("expected {} fields, got {}", cols.len(), fields.len()),
            ));
        }
        let frame: usize = fields[0]
            .parse()
            .map_err(|_| data_err(path, lineno, format!("bad frame index `{}`", fields[0])))?;
        let x: f64 = fields[1]
            .parse()
            .map_err(|_| data_err(path, lineno, format!("bad x `{}`", fields[1])))?;
        let y: f64 = fields[2]
            .parse()
            .map_err(|_| data_err(path, lineno, format!("bad y `{}`", fields[2])))?;
        let confidence = if has_conf && !fields[3].is_empty() {
            let c: f64 = fields[3]
                .parse()
                .map_err(|_| data_err(path, lineno, format!("bad confidence `{}`", fields[3])))?;
            if !(0.0..=1.0).contains(&c) {
                return Err(data_err(
                    path,
                    lineno,
                    format!("confidence {c} outside [0, 1]"),
                ));
            }
            Some(c)
        } else {
            None
        };
        let bbox_area = if has_bbox && !fields[4].is_empty() {
            Some(fields[4].parse().map_err(|_| {
                data_err(path, lineno, format!("bad bbox_area `{}`", fields[4]))
            })?)
        } else {
            None
        };
        out.push(RawDetectionRecord {
            frame,
            x,
            y,
            confidence,
            bbox_area,
        });
    }
    Ok(out)
}

/// Ingest a detection file into per-frame detection sets, frames 0..=max.
/// Records with a bounding-box area outside the configured gate get
/// confidence 0; records without a confidence get the default.
pub fn ingest(path: &Path, params: &ModelParams) -> Result<Vec<Vec<Detection>>, CliError> {
    let records = read_detections(path)?;
    let n_frames = records.iter().map(|r| r.frame + 1).max().unwrap_or(0);
    let mut frames = vec![Vec::new(); n_frames];
    for r in records {
        let mut confidence = r.confidence.unwrap_or(DEFAULT_CONFIDENCE);
        if let Some(area) = r.bbox_area
            && !(params.bbox_area_min..=params.bbox_area_max).contains(&area)
        {
            confidence = 0.0;
        }
        frames[r.frame].push(Detection::new(r.x, r.y, confidence));
    }
    Ok(frames)
}

pub fn write_detections(path: &Path, frames: &[Vec<Detection>]) -> Result<(), CliError> {
    let mut out = String::from("frame,x,y,confidence\n");
    for (t, dets) in frames.iter().enumerate() {
        for d in dets {
            out.push_str(&format!("{t},{},{},{}\n", d.x, d.y, d.confidence));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_ground_truth(path: &Path, scenario: &Scenario) -> Result<(), CliError> {
    let mut out = String::from("frame,gt_id,x,y\n");
    for frame in &scenario.frames {
        for obj in &frame.objects {
            out.push_str(&format!(
                "{},{},{},{}\n",
                frame.t, obj.id, obj.state.x, obj.state.y
            ));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read ground truth into frame-aligned records, frames 0..=max.
pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthFrame>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{}: empty file, header required", path.display())))?;
    if split_csv(header) != vec!["frame", "gt_id", "x", "y"] {
        return Err(data_err(path, 1, "header must be `frame,gt_id,x,y`"));
    }
    let mut rows: Vec<(usize, u64, f64, f64)> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f = split_csv(line);
        if f.len() != 4 {
            return Err(data_err(path, lineno, "expected 4 fields"));
        }
        let parse = |s: &str, what: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|_| data_err(path, lineno, format!("bad {what} `{s}`")))
        };
        rows.push((
            parse(f[0], "frame")? as usize,
            parse(f[1], "gt_id")? as u64,
            parse(f[2], "x")?,
            parse(f[3], "y")?,
        ));
    }
    let n_frames = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let mut frames: Vec<GroundTruthFrame> = (0..n_frames)
        .map(|t| GroundTruthFrame {
            t,
            objects: Vec::new(),
        })
        .collect();
    for (t, id, x, y) in rows {
        frames[t].objects.push((id, x, y));
    }
    Ok(frames)
}

pub fn write_tracks(path: &Path, frames: &[(usize, Vec<Identity>)]) -> Result<(), CliError> {
    let mut out = String::from("frame,rho,x,y,vx,vy,confidence\n");
    for (t, identities) in frames {
        for h in identities {
            out.push_str(&format!(
                "{t},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                h.id, h.state.x, h.state.y, h.state.vx, h.state.vy, h.confidence
            ));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read tracker output into frame-aligned records, frames 0..=max.
pub fn read_tracks(path: &Path) -> Result<Vec<TrackFrame>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{}: empty file, header required", path.display())))?;
    if split_csv(header) != vec!["frame", "rho", "x", "y", "vx", "vy", "confidence"] {
        return Err(data_err(
            path,
            1,
            "header must be `frame,rho,x,y,vx,vy,confidence`",
        ));
    }
    let mut rows: Vec<(usize, u64, f64, f64, f64)> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f = split_csv(line);
        if f.len() != 7 {
            return Err(data_err(path, lineno, "expected 7 fields"));
        }
        let parse = |s: &str, what: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|_| data_err(path, lineno, format!("bad {what} `{s}`")))
        };
        rows.push((
            parse(f[0], "frame")? as usize,
            parse(f[1], "rho")? as u64,
            parse(f[2], "x")?,
            parse(f[3], "y")?,
            parse(f[6], "confidence")?,
        ));
    }
    let n_frames = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let mut frames: Vec<TrackFrame> = (0..n_frames)
        .map(|t| TrackFrame {
            t,
            tracks: Vec::new(),
        })
        .collect();
    for (t, rho, x, y, c) in rows {
        frames[t].tracks.push((rho, x, y, c));
    }
    Ok(frames)
}

/// Pad the shorter of the two frame sequences with empty frames so both
/// cover 0..=max; evaluation treats absent frames as empty.
pub fn align_frames(
    mut gt: Vec<GroundTruthFrame>,
    mut tracks: Vec<TrackFrame>,
) -> (Vec<GroundTruthFrame>, Vec<TrackFrame>) {
    let n = gt.len().max(tracks.len());
    while gt.len() < n {
        let t = gt.len();
        gt.push(GroundTruthFrame {
            t,
            objects: Vec::new(),
        });
    }
    while tracks.len() < n {
        let t = tracks.len();
        tracks.push(TrackFrame {
            t,
            tracks: Vec::new(),
        });
    }
    (gt, tracks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("settrack-formats-test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn ingest_applies_bbox_gate_and_defaults() {
        let path = tmp("dets.csv");
        std::fs::write(
            &path,
            "frame,x,y,confidence,bbox_area\n\
             0,1.0,2.0,0.8,1.0\n\
             0,3.0,4.0,0.9,0.3\n\
             1,5.0,6.0,,1.2\n",
        )
        .unwrap();
        let params = ModelParams::pets2009();
        let frames = ingest(&path, &params).unwrap();
        assert_eq!(frames.len(), 2);
        // Passes through unchanged.
        assert_eq!(frames[0][0], Detection::new(1.0, 2.0, 0.8));
        // bbox_area 0.3 < 0.5 forces confidence zero.
        assert_eq!(frames[0][1], Detection::new(3.0, 4.0, 0.0));
        // Missing confidence takes the default.
        assert_eq!(frames[1][0], Detection::new(5.0, 6.0, 0.5));
    }

    #[test]
    fn ingest_rejects_bad_rows_with_line_numbers() {
        let path = tmp("bad_dets.csv");
        std::fs::write(&path, "frame,x,y,confidence\n0,1.0,oops,0.5\n").unwrap();
        let err = ingest(&path, &ModelParams::pets2009()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains(":2:"), "{err}");

        let path = tmp("range_dets.csv");
        std::fs::write(&path, "frame,x,y,confidence\n0,1.0,2.0,1.5\n").unwrap();
        let err = ingest(&path, &ModelParams::pets2009()).unwrap_err();
        assert!(err.to_string().contains("outside"), "{err}");
    }

    #[test]
    fn detections_round_trip_exactly() {
        let path = tmp("roundtrip.csv");
        let frames = vec![
            vec![
                Detection::new(1.234567890123, 2.0 / 3.0, 0.71234567),
                Detection::new(-0.5, 15.799999999999999, 1.0),
            ],
            vec![],
            vec![Detection::new(1e-17, 3.0, 0.0)],
        ];
        write_detections(&path, &frames).unwrap();
        let mut params = ModelParams::pets2009();
        // A gate that nothing trips (no bbox column is written anyway).
        params.bbox_area_min = 0.0;
        params.bbox_area_max = 1e9;
        let back = ingest(&path, &params).unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn tracks_round_trip_at_fixed_precision() {
        let path = tmp("tracks.csv");
        let identities = vec![Identity {
            state: settrack::models::ObjectState::new(1.5, 2.25, -0.125, 0.0),
            confidence: 0.8125,
            id: 3,
        }];
        write_tracks(&path, &[(0, identities)]).unwrap();
        let frames = read_tracks(&path).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].tracks, vec![(3, 1.5, 2.25, 0.8125)]);
    }

    #[test]
    fn align_pads_with_empty_frames() {
        let gt = vec![GroundTruthFrame {
            t: 0,
            objects: vec![(1, 0.0, 0.0)],
        }];
        let (gt, tr) = align_frames(gt, Vec::new());
        assert_eq!(gt.len(), 1);
        assert_eq!(tr.len(), 1);
        assert!(tr[0].tracks.is_empty());
    }
}
