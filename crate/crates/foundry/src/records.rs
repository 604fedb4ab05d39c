//! JSON-lines artifacts exchanged between stages.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use patchfoundry_core::gate::{CameraDecision, FilterReport};
use patchfoundry_core::geom::{View, ViewMember, ViewStatus};
use patchfoundry_core::sampler::PatchSpec;
use patchfoundry_core::Homography;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(f)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, l)| {
            serde_json::from_str(&l?).with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReportRecord {
    pub image_id: String,
    /// f1..f5: sky, vehicles, sharpness, brightness, size.
    pub filters: [bool; 5],
    pub pass: bool,
    #[serde(default)]
    pub sidecar_missing: bool,
    #[serde(default)]
    pub corrupted: bool,
}

impl From<&FilterReport> for ImageReportRecord {
    fn from(r: &FilterReport) -> Self {
        Self {
            image_id: r.image_id.clone(),
            filters: r.flags(),
            pass: r.pass,
            sidecar_missing: r.sidecar_missing,
            corrupted: r.corrupted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub camera_id: String,
    pub kept: bool,
    pub n_images: usize,
    pub passing: usize,
    pub failure_counts: [usize; 5],
    pub reports: Vec<ImageReportRecord>,
}

impl CameraRecord {
    pub fn from_decision(d: &CameraDecision, n_images: usize) -> Self {
        Self {
            camera_id: d.camera_id.clone(),
            kept: d.kept,
            n_images,
            passing: d.passing(),
            failure_counts: d.failure_counts,
            reports: d.reports.iter().map(ImageReportRecord::from).collect(),
        }
    }

    pub fn reasons(&self) -> Vec<String> {
        const NAMES: [&str; 5] = ["sky", "vehicles", "sharpness", "brightness", "size"];
        NAMES
            .iter()
            .zip(self.failure_counts)
            .filter(|(_, c)| *c > 0)
            .map(|(n, c)| format!("{n} failed on {c} of {} sampled", self.reports.len()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentativesRecord {
    pub camera_id: String,
    pub n_images: usize,
    /// Chosen image ids in archive order.
    pub representatives: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub image_id: String,
    /// Member-to-reference homography, row-major, h33 = 1.
    pub h: [f64; 9],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ncc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub camera_id: String,
    pub view_id: String,
    pub reference: String,
    pub members: Vec<MemberRecord>,
    pub status: String,
    #[serde(default)]
    pub reasons: Vec<String>,
}

impl ViewRecord {
    pub fn from_view(camera_id: &str, v: &View) -> Self {
        Self {
            camera_id: camera_id.to_string(),
            view_id: v.view_id.clone(),
            reference: v.reference.clone(),
            members: v
                .members
                .iter()
                .map(|m| MemberRecord {
                    image_id: m.image_id.clone(),
                    h: m.homography.coefficients(),
                    ncc: None,
                })
                .collect(),
            status: v.status.as_str().to_string(),
            reasons: v.reasons.clone(),
        }
    }

    pub fn to_view(&self) -> Result<View> {
        let members = self
            .members
            .iter()
            .map(|m| {
                Ok(ViewMember {
                    image_id: m.image_id.clone(),
                    homography: Homography::from_coefficients(m.h)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let view = View {
            view_id: self.view_id.clone(),
            reference: self.reference.clone(),
            members,
            status: ViewStatus::parse(&self.status)
                .ok_or_else(|| anyhow!("unknown view status {:?}", self.status))?,
            reasons: self.reasons.clone(),
        };
        view.validate()?;
        Ok(view)
    }

    pub fn member_ids(&self) -> Vec<String> {
        self.members.iter().map(|m| m.image_id.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// A view admitted to sampling, with its dataset ordinal and split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledViewRecord {
    pub view_ordinal: u32,
    pub camera_id: String,
    pub view_id: String,
    pub split: Split,
    pub n_specs: usize,
    pub uniform_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecRecord {
    pub set_id: u64,
    pub view_ordinal: u32,
    pub view_id: String,
    pub split: Split,
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub angle: f64,
}

impl SpecRecord {
    pub fn spec(&self) -> PatchSpec {
        PatchSpec {
            x: self.x,
            y: self.y,
            scale: self.scale,
            angle: self.angle,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn view_record_round_trip_is_exact() {
        let mut v = View::singleton("c.v00".into(), "f000".into());
        v.members.push(ViewMember {
            image_id: "f001".into(),
            homography: Homography::from_coefficients([
                1.0000001, 1e-7, 0.123456789, -3e-6, 0.9999, -0.2, 1e-9, -2e-9, 1.0,
            ])
            .unwrap(),
        });
        v.status = ViewStatus::Registered;
        let rec = ViewRecord::from_view("c", &v);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.jsonl");
        write_jsonl(&p, &[rec.clone()]).unwrap();
        let back: Vec<ViewRecord> = read_jsonl(&p).unwrap();
        assert_eq!(back, vec![rec]);
        assert_eq!(back[0].to_view().unwrap(), v);
    }
}
