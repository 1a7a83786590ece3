//! JSON-lines benchmark manifests.
//!
//! Each line is one sample:
//! `{id, image, prompt, mask?, points?: [{hx,hy,tx,ty}], regions?: [{handle, target}]}`
//! with `image` relative to the manifest's directory. Samples that fail
//! validation are reported with a reason instead of aborting the load.

use std::{
    collections::HashSet,
    io::Write,
    path::{Path, PathBuf},
};

use regiondrag_core::{CoordSpace, ImageBuffer, Point, PointPair, Region, RegionPair};
use serde::{Deserialize, Serialize};

use crate::{
    error::{AppError, Result},
    formats::{region_pairs, PointRecord, RegionPairRecord, RegionRecord},
    imageio,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub image: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<RegionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<PointRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<Vec<RegionPairRecord>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub record: ManifestRecord,
    /// 1-based manifest line.
    pub line: usize,
    pub image_path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub pairs: Vec<RegionPair>,
    pub mask: Option<Region>,
    /// The record's points, or one pair per region pair from the rounded
    /// handle centroid to the rounded target centroid.
    pub points: Vec<PointPair>,
}

impl Sample {
    pub fn load_image(&self) -> Result<ImageBuffer> {
        let img = imageio::load_png(&self.image_path)?;
        if (img.width(), img.height()) != (self.width, self.height) {
            return Err(AppError::Image(format!(
                "{} changed size since the manifest was loaded",
                self.image_path.display()
            )));
        }
        Ok(img)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub samples: Vec<Sample>,
    pub rejects: Vec<Reject>,
}

impl Dataset {
    pub fn records(&self) -> impl Iterator<Item = &ManifestRecord> {
        self.samples.iter().map(|s| &s.record)
    }
}

fn centroid(region: &Region) -> Point {
    let n = region.len() as f64;
    let (sx, sy) = region
        .pixels()
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x as f64, sy + p.y as f64));
    Point::new((sx / n).round() as u32, (sy / n).round() as u32)
}

/// Handle centroid to target centroid, rounded to the nearest pixel.
pub fn centroid_points(pairs: &[RegionPair]) -> Vec<PointPair> {
    pairs
        .iter()
        .map(|p| PointPair::new(centroid(&p.handle), centroid(&p.target), CoordSpace::Image))
        .collect()
}

fn check_grid(what: &str, r: &RegionRecord, w: u32, h: u32) -> std::result::Result<(), String> {
    if (r.image_w, r.image_h) != (w, h) {
        return Err(format!("{what} is drawn on {}x{}, image is {w}x{h}", r.image_w, r.image_h));
    }
    Ok(())
}

fn validate(record: ManifestRecord, line: usize, root: &Path) -> std::result::Result<Sample, String> {
    let image_path = root.join(&record.image);
    let (width, height) = imageio::dimensions(&image_path).map_err(|e| e.to_string())?;
    let records = record.regions.as_deref().unwrap_or_default();
    if records.is_empty() {
        return Err("sample has no region pairs".into());
    }
    for (i, r) in records.iter().enumerate() {
        check_grid(&format!("regions[{i}].handle"), &r.handle, width, height)?;
        check_grid(&format!("regions[{i}].target"), &r.target, width, height)?;
    }
    let pairs = region_pairs(records).map_err(|e| e.to_string())?;
    let mask = match &record.mask {
        Some(m) => {
            check_grid("mask", m, width, height)?;
            Some(m.to_region().map_err(|e| format!("mask: {e}"))?)
        }
        None => None,
    };
    let points = match &record.points {
        Some(pts) if pts.is_empty() => return Err("points is present but empty".into()),
        Some(pts) => {
            let pts: Vec<_> = pts.iter().map(|p| p.to_pair()).collect();
            for p in &pts {
                p.validate(width, height).map_err(|e| format!("points: {e}"))?;
            }
            pts
        }
        None => centroid_points(&pairs),
    };
    Ok(Sample {
        record,
        line,
        image_path,
        width,
        height,
        pairs,
        mask,
        points,
    })
}

/// Parses manifest text; `root` resolves image paths.
pub fn parse_manifest(text: &str, root: &Path) -> Dataset {
    let mut samples = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = match serde_json::from_str(raw) {
            Ok(r) => r,
            Err(e) => {
                rejects.push(Reject {
                    line,
                    id: None,
                    reason: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        let id = record.id.clone();
        if !seen.insert(id.clone()) {
            rejects.push(Reject {
                line,
                id: Some(id),
                reason: "duplicate id".into(),
            });
            continue;
        }
        match validate(record, line, root) {
            Ok(s) => samples.push(s),
            Err(reason) => rejects.push(Reject {
                line,
                id: Some(id),
                reason,
            }),
        }
    }
    Dataset {
        root: root.to_path_buf(),
        samples,
        rejects,
    }
}

pub fn load_dataset(manifest: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(manifest).map_err(|e| AppError::io(manifest, e))?;
    let root = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(parse_manifest(&text, &root))
}

pub fn manifest_text<'a>(records: impl IntoIterator<Item = &'a ManifestRecord>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("manifest records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_manifest<'a>(path: &Path, records: impl IntoIterator<Item = &'a ManifestRecord>) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    f.write_all(manifest_text(records).as_bytes())
        .map_err(|e| AppError::io(path, e))
}
