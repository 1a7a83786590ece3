//! Benchmark runner: edits every sample of a dataset and scores the results.

use std::{
    io::Write,
    path::Path,
    sync::atomic::{AtomicUsize, Ordering},
    time::Instant,
};

use regiondrag_core::{
    bench::{equivalent_point_stats, mean, sample_point_subset},
    metrics::{mean_distance, pixel_similarity_proxy, PatchMatcher, SearchScope},
    pipeline::{Engine, PreparedEdit},
    time::SystemClock,
    EditConfig,
};
use serde::Serialize;

use crate::{
    backends::{CodecChoice, Registry},
    dataset::{Dataset, Reject, Sample},
    error::{AppError, Result},
};

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub config: EditConfig,
    pub backend: Option<String>,
    pub codec: CodecChoice,
    pub workers: usize,
    /// Keep this fraction of the mapped points (seeded by the config seed).
    pub subset: Option<f64>,
    pub scope: SearchScope,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            config: EditConfig::default(),
            backend: None,
            codec: CodecChoice::default(),
            workers: 1,
            subset: None,
            scope: SearchScope::Masked,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRow {
    pub id: String,
    pub ok: bool,
    pub md_x100: Option<f64>,
    pub proxy_x100: Option<f64>,
    pub wall_ms: Option<f64>,
    pub mapped_points: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregates {
    pub samples: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub mean_md_x100: Option<f64>,
    pub mean_proxy_x100: Option<f64>,
    pub mean_wall_ms: Option<f64>,
}

impl Aggregates {
    /// Means over the rows that succeeded.
    pub fn from_rows(rows: &[SampleRow]) -> Self {
        let ok = || rows.iter().filter(|r| r.ok);
        let succeeded = ok().count();
        Self {
            samples: rows.len(),
            succeeded,
            failed: rows.len() - succeeded,
            mean_md_x100: mean(ok().filter_map(|r| r.md_x100)),
            mean_proxy_x100: mean(ok().filter_map(|r| r.proxy_x100)),
            mean_wall_ms: mean(ok().filter_map(|r| r.wall_ms)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub backend: String,
    pub codec: String,
    pub config: EditConfig,
    pub subset: Option<f64>,
    pub aggregates: Aggregates,
    pub rows: Vec<SampleRow>,
    pub rejects: Vec<Reject>,
}

struct Scores {
    md_x100: f64,
    proxy_x100: f64,
    mapped_points: usize,
}

fn run_sample(registry: &Registry, sample: &Sample, opts: &BenchOptions) -> Result<Scores> {
    let image = sample.load_image()?;
    let backend = registry.build(opts.backend.as_deref(), &opts.config)?;
    let codec = opts.codec.build()?;
    let clock = SystemClock::default();
    let engine = Engine::new(backend.as_ref(), codec.as_ref()).with_clock(&clock);
    let outcome = match opts.subset {
        None => engine.run_edit(&image, &sample.pairs, &sample.record.prompt, &opts.config)?,
        Some(fraction) => {
            let prepared = PreparedEdit::from_region_pairs(&sample.pairs, codec.scale_factor())?;
            let subset = sample_point_subset(&prepared.mapping, fraction, opts.config.seed)?;
            engine.run_edit_prepared(&image, prepared.with_mapping(subset), &sample.record.prompt, &opts.config)?
        }
    };
    let md = mean_distance(&image, &outcome.image, &sample.points, &PatchMatcher::default(), opts.scope)?;
    Ok(Scores {
        md_x100: md.md_x100,
        proxy_x100: pixel_similarity_proxy(&image, &outcome.image)?,
        mapped_points: outcome.session.mapping.len(),
    })
}

fn row(registry: &Registry, sample: &Sample, opts: &BenchOptions) -> SampleRow {
    let start = Instant::now();
    let result = run_sample(registry, sample, opts);
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    match result {
        Ok(s) => SampleRow {
            id: sample.record.id.clone(),
            ok: true,
            md_x100: Some(s.md_x100),
            proxy_x100: Some(s.proxy_x100),
            wall_ms: Some(wall_ms),
            mapped_points: Some(s.mapped_points),
            error: None,
        },
        Err(e) => SampleRow {
            id: sample.record.id.clone(),
            ok: false,
            md_x100: None,
            proxy_x100: None,
            wall_ms: None,
            mapped_points: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs every sample on up to `opts.workers` threads; rows come back in
/// sample order regardless of completion order.
pub fn run_benchmark(registry: &Registry, dataset: &Dataset, opts: &BenchOptions) -> Result<BenchReport> {
    opts.config.validate()?;
    let probe = registry.build(opts.backend.as_deref(), &opts.config)?;
    let n = dataset.samples.len();
    let workers = if probe.concurrent() { opts.workers.clamp(1, n.max(1)) } else { 1 };
    let next = AtomicUsize::new(0);
    let mut rows: Vec<(usize, SampleRow)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= n {
                            break done;
                        }
                        done.push((i, row(registry, &dataset.samples[i], opts)));
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("benchmark worker panicked"))
            .collect()
    });
    rows.sort_by_key(|(i, _)| *i);
    let rows: Vec<SampleRow> = rows.into_iter().map(|(_, r)| r).collect();
    Ok(BenchReport {
        backend: probe.name().to_string(),
        codec: opts.codec.to_string(),
        config: opts.config.clone(),
        subset: opts.subset,
        aggregates: Aggregates::from_rows(&rows),
        rows,
        rejects: dataset.rejects.clone(),
    })
}

/// One CSV row per sample, failed samples with empty metric columns.
pub fn write_csv(rows: &[SampleRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| AppError::format("csv row", e))?;
    }
    w.flush().map_err(|e| AppError::io("<csv>", e))
}

pub fn write_report(report: &BenchReport, json: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    if let Some(path) = json {
        let text = serde_json::to_string_pretty(report).expect("reports serialize");
        std::fs::write(path, text).map_err(|e| AppError::io(path, e))?;
    }
    if let Some(path) = csv {
        let f = std::fs::File::create(path).map_err(|e| AppError::io(path, e))?;
        write_csv(&report.rows, f)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub frequency: usize,
}

/// Equivalent-point statistics over every region pair of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub pairs: usize,
    pub counts: Vec<usize>,
    pub median: Option<f64>,
    /// Histogram of `log10(count)`.
    pub histogram: Vec<HistogramBin>,
}

pub fn point_stats(dataset: &Dataset) -> Result<StatsReport> {
    let stats = equivalent_point_stats(dataset.samples.iter().flat_map(|s| &s.pairs))?;
    Ok(StatsReport {
        pairs: stats.counts.len(),
        median: stats.median,
        histogram: stats
            .histogram
            .iter()
            .map(|b| HistogramBin {
                lo: b.lo,
                hi: b.hi,
                frequency: b.frequency,
            })
            .collect(),
        counts: stats.counts,
    })
}
