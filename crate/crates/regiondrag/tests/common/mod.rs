#![allow(dead_code)]

use std::path::{Path, PathBuf};

use regiondrag::{
    dataset::ManifestRecord,
    formats::{PointRecord, RegionPairRecord},
    imageio,
};
use regiondrag_core::synthetic::SquareFixture;

pub fn square_pair_record(f: &SquareFixture) -> RegionPairRecord {
    RegionPairRecord::from(&f.region_pair().unwrap())
}

/// Writes the fixture image and its regions file into `dir`.
pub fn write_fixture(dir: &Path, seed: u64) -> (PathBuf, PathBuf) {
    let f = SquareFixture::family(seed);
    let image = dir.join(format!("square{seed}.png"));
    let regions = dir.join(format!("square{seed}.json"));
    imageio::save_png(&f.image(), &image).unwrap();
    std::fs::write(&regions, serde_json::to_string(&vec![square_pair_record(&f)]).unwrap()).unwrap();
    (image, regions)
}

pub fn fixture_record(dir: &Path, seed: u64) -> ManifestRecord {
    let f = SquareFixture::family(seed);
    let name = format!("square{seed}.png");
    imageio::save_png(&f.image(), &dir.join(&name)).unwrap();
    ManifestRecord {
        id: format!("square-{seed}"),
        image: name,
        prompt: "a square".into(),
        mask: None,
        points: Some(vec![PointRecord::from(f.point_pair())]),
        regions: Some(vec![square_pair_record(&f)]),
    }
}

/// `n` synthetic samples and their manifest; returns the manifest path.
pub fn fixture_manifest(dir: &Path, n: u64) -> PathBuf {
    let records: Vec<_> = (0..n).map(|s| fixture_record(dir, s)).collect();
    let path = dir.join("manifest.jsonl");
    regiondrag::dataset::write_manifest(&path, &records).unwrap();
    path
}
