//! JSON Lines prediction dumps for offline evaluation.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::pose::GraspPose;

/// One sample: predicted mask PNG path and ranked poses `[x, y, theta_deg, l]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub mask: String,
    pub poses: Vec<[f64; 4]>,
}

impl PredictionRecord {
    pub fn from_poses(id: String, mask: String, poses: &[GraspPose]) -> Self {
        PredictionRecord {
            id,
            mask,
            poses: poses
                .iter()
                .map(|p| [p.x, p.y, p.theta.to_degrees(), p.l])
                .collect(),
        }
    }

    /// Poses with depth unknown (0).
    pub fn grasp_poses(&self) -> Vec<GraspPose> {
        self.poses
            .iter()
            .map(|p| GraspPose {
                x: p[0],
                y: p[1],
                z: 0.0,
                theta: p[2].to_radians(),
                l: p[3],
            })
            .collect()
    }
}

pub fn write_dump(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| GeometryError::Input(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dump; a malformed line is reported with its 1-based line number.
pub fn read_dump(path: &Path) -> Result<Vec<PredictionRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| GeometryError::Record {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
