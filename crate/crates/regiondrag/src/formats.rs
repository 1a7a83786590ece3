//! Structured-text records for regions, mappings, reports and sessions.

use regiondrag_core::{
    denoiser::KvFragment,
    grid::Mask,
    mapping::Conflict,
    metrics::DistanceReport,
    pipeline::EditSession,
    time::StageTimings,
    CoordSpace, EditConfig, LatentGrid, MappedPointSet, Point, PointPair, Region, RegionPair, RegionShape, Vertex,
};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

/// Run lengths of a row-major mask, alternating unset/set and starting with
/// an unset run (which may be 0).
pub fn encode_rle(mask: &Mask) -> Vec<u32> {
    let mut runs = Vec::new();
    let (mut current, mut len) = (false, 0u32);
    for &bit in mask.bits() {
        if bit == current {
            len += 1;
        } else {
            runs.push(len);
            current = bit;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn decode_rle(runs: &[u32], width: u32, height: u32) -> Result<Mask> {
    let total = width as u64 * height as u64;
    let sum: u64 = runs.iter().map(|&r| r as u64).sum();
    if sum != total {
        return Err(AppError::format(
            "mask_rle",
            format!("runs cover {sum} pixels, image has {width}x{height} = {total}"),
        ));
    }
    let mut bits = Vec::with_capacity(total as usize);
    for (i, &r) in runs.iter().enumerate() {
        bits.extend(std::iter::repeat_n(i % 2 == 1, r as usize));
    }
    Ok(Mask::from_bits(width, height, bits)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ShapeRecord {
    Polygon { vertices: Vec<[i64; 2]> },
    Brush { mask_rle: Vec<u32> },
}

/// `{type: "polygon"|"brush", vertices|mask_rle, image_w, image_h}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionRecord {
    #[serde(flatten)]
    pub shape: ShapeRecord,
    pub image_w: u32,
    pub image_h: u32,
}

impl RegionRecord {
    pub fn polygon(vertices: impl IntoIterator<Item = (i64, i64)>, image_w: u32, image_h: u32) -> Self {
        Self {
            shape: ShapeRecord::Polygon {
                vertices: vertices.into_iter().map(|(x, y)| [x, y]).collect(),
            },
            image_w,
            image_h,
        }
    }

    pub fn to_region(&self) -> Result<Region> {
        let shape = match &self.shape {
            ShapeRecord::Polygon { vertices } => {
                RegionShape::Polygon(vertices.iter().map(|&[x, y]| Vertex::new(x, y)).collect())
            }
            ShapeRecord::Brush { mask_rle } => RegionShape::Brush(decode_rle(mask_rle, self.image_w, self.image_h)?),
        };
        Ok(Region::new(shape, self.image_w, self.image_h)?)
    }
}

impl From<&Region> for RegionRecord {
    fn from(region: &Region) -> Self {
        let shape = match region.shape() {
            RegionShape::Polygon(v) => ShapeRecord::Polygon {
                vertices: v.iter().map(|v| [v.x, v.y]).collect(),
            },
            RegionShape::Brush(mask) => ShapeRecord::Brush { mask_rle: encode_rle(mask) },
        };
        Self {
            shape,
            image_w: region.width(),
            image_h: region.height(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionPairRecord {
    pub handle: RegionRecord,
    pub target: RegionRecord,
}

impl From<&RegionPair> for RegionPairRecord {
    fn from(pair: &RegionPair) -> Self {
        Self {
            handle: (&pair.handle).into(),
            target: (&pair.target).into(),
        }
    }
}

/// Rasterizes records into pairs indexed by position.
pub fn region_pairs(records: &[RegionPairRecord]) -> Result<Vec<RegionPair>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| Ok(RegionPair::new(r.handle.to_region()?, r.target.to_region()?, i)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointRecord {
    pub hx: u32,
    pub hy: u32,
    pub tx: u32,
    pub ty: u32,
}

impl PointRecord {
    pub fn to_pair(self) -> PointPair {
        PointPair::new(Point::new(self.hx, self.hy), Point::new(self.tx, self.ty), CoordSpace::Image)
    }
}

impl From<PointPair> for PointRecord {
    fn from(p: PointPair) -> Self {
        Self {
            hx: p.handle.x,
            hy: p.handle.y,
            tx: p.target.x,
            ty: p.target.y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingRow {
    pub hx: u32,
    pub hy: u32,
    pub tx: u32,
    pub ty: u32,
    pub pair_index: usize,
}

/// A merged mapping for display or export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingExport {
    pub space: CoordSpace,
    pub width: u32,
    pub height: u32,
    pub count: usize,
    /// Targets claimed by more than one pair; the later pair wins.
    pub conflicts: usize,
    pub pairs: Vec<MappingRow>,
}

impl MappingExport {
    pub fn new(mapping: &MappedPointSet, conflicts: &[Conflict]) -> Self {
        Self {
            space: mapping.space,
            width: mapping.width,
            height: mapping.height,
            count: mapping.len(),
            conflicts: conflicts.len(),
            pairs: mapping
                .pairs
                .iter()
                .map(|p| MappingRow {
                    hx: p.handle.x,
                    hy: p.handle.y,
                    tx: p.target.x,
                    ty: p.target.y,
                    pair_index: p.pair_index,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetric {
    pub h: [u32; 2],
    pub t: [u32; 2],
    /// Best match of the handle's content; absent when `h == t`.
    pub h_prime: Option<[u32; 2]>,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_pair: Vec<PairMetric>,
    pub md_x100: f64,
    pub proxy_x100: Option<f64>,
    pub matcher: String,
}

impl MetricReport {
    pub fn new(report: &DistanceReport, proxy_x100: Option<f64>) -> Self {
        let xy = |p: Point| [p.x, p.y];
        Self {
            per_pair: report
                .per_pair
                .iter()
                .map(|p| PairMetric {
                    h: xy(p.handle),
                    t: xy(p.target),
                    h_prime: p.matched.map(|m| xy(m.position)),
                    d: p.distance,
                })
                .collect(),
            md_x100: report.md_x100,
            proxy_x100,
            matcher: report.matcher.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    /// `inversion` for z_t, `edited` for the latent fed to the denoiser at t.
    pub stage: String,
    pub t: u32,
    pub shape: [u32; 3],
    pub mean: f64,
    pub std: f64,
    pub max_abs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Vec<f64>>,
}

impl LatentRecord {
    fn new(stage: &str, z: &LatentGrid, with_data: bool) -> Self {
        let n = z.len().max(1) as f64;
        let mean = z.data().iter().sum::<f64>() / n;
        let var = z.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            stage: stage.into(),
            t: z.timestep(),
            shape: [z.channels(), z.height(), z.width()],
            mean,
            std: var.sqrt(),
            max_abs: z.data().iter().fold(0.0, |m, v| m.max(v.abs())),
            data: with_data.then(|| z.data().to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KvLayerRecord {
    pub layer: u32,
    pub tokens: usize,
    pub key_dim: usize,
    pub value_dim: usize,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KvRecord {
    pub t: u32,
    pub layers: Vec<KvLayerRecord>,
}

impl KvRecord {
    fn new(t: u32, fragment: &KvFragment) -> Self {
        Self {
            t,
            layers: fragment
                .layers
                .iter()
                .map(|l| KvLayerRecord {
                    layer: l.layer,
                    tokens: l.tokens,
                    key_dim: l.key_dim,
                    value_dim: l.value_dim,
                    bytes: l.byte_len(),
                })
                .collect(),
        }
    }
}

/// Everything an edit session produced except the KV tensors themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionExport {
    pub config: EditConfig,
    pub timesteps: Vec<u32>,
    pub cp_timesteps: Vec<u32>,
    pub mapped_points: usize,
    pub conflicts: usize,
    pub timings: StageTimings,
    pub warnings: Vec<String>,
    pub latents: Vec<LatentRecord>,
    pub kv: Vec<KvRecord>,
}

impl SessionExport {
    /// `with_data` includes every latent's values, not only summaries.
    pub fn new(session: &EditSession, with_data: bool) -> Self {
        let latents = session
            .trajectory
            .values()
            .map(|z| LatentRecord::new("inversion", z, with_data))
            .chain(session.edited.values().map(|z| LatentRecord::new("edited", z, with_data)))
            .collect();
        Self {
            config: session.config.clone(),
            timesteps: session.grid.timesteps().to_vec(),
            cp_timesteps: session.cp_timesteps.clone(),
            mapped_points: session.mapping.len(),
            conflicts: session.conflicts.len(),
            timings: session.timings,
            warnings: session.warnings.clone(),
            latents,
            kv: session.kv_cache.iter().map(|(t, f)| KvRecord::new(t, f)).collect(),
        }
    }
}
