//! End-to-end denoising pipeline: segmentation, per-voxel graph
//! denoising with an optional worker pool, and a versioned report. All
//! outputs are order-normalized, so the thread count never changes bytes.

use rayon::prelude::*;
use serde::Serialize;

use crate::denoise::{filter_graph, optimal_threshold};
use crate::error::{Error, Result};
use crate::events::{Event, EventStream};
use crate::graph::{build_graph, WeightParams};
use crate::segment::{partition_voxels, partition_windows, voxel_count, SegmentationConfig, Voxel};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineConfig {
    pub segmentation: SegmentationConfig,
    pub weights: WeightParams,
    /// Worker pool size; 0 uses the library default.
    pub threads: usize,
}

/// Per-voxel denoising summary. `n_edges` counts the candidate edges
/// before filtering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VoxelReport {
    pub window: usize,
    pub voxel: usize,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub mst_max: f64,
    pub t_opt: f64,
    pub n_removed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub weights: WeightParams,
    pub segmentation: SegmentationConfig,
    pub events_in: usize,
    pub events_kept: usize,
    pub events_removed: usize,
    pub n_windows: usize,
    pub n_voxels: usize,
    pub voxels: Vec<VoxelReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    /// Kept events across all voxels, re-sorted by time.
    pub kept: EventStream,
    pub report: PipelineReport,
}

fn process_voxel(voxel: &Voxel, params: &WeightParams) -> (Vec<Event>, VoxelReport) {
    let graph = build_graph(voxel, params);
    let n_nodes = graph.n_nodes();
    let n_edges = graph.n_edges();
    if n_nodes <= 1 {
        return (
            graph.nodes.clone(),
            VoxelReport {
                window: voxel.window_index,
                voxel: voxel.voxel_index,
                n_nodes,
                n_edges,
                mst_max: 0.0,
                t_opt: 0.0,
                n_removed: 0,
            },
        );
    }
    let search = optimal_threshold(&graph);
    let filtered = filter_graph(&graph, search.t_opt);
    let kept_events: Vec<Event> = filtered.kept.iter().map(|&id| graph.nodes[id]).collect();
    (
        kept_events,
        VoxelReport {
            window: voxel.window_index,
            voxel: voxel.voxel_index,
            n_nodes,
            n_edges,
            mst_max: search.mst_max,
            t_opt: search.t_opt,
            n_removed: filtered.removed.len(),
        },
    )
}

/// Runs segmentation and per-voxel denoising over a stream. Results are
/// deterministic for a given input and configuration regardless of the
/// worker pool size.
pub fn run(stream: &EventStream, config: &PipelineConfig) -> Result<PipelineOutput> {
    config.segmentation.validate()?;
    config.weights.validate()?;
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }

    let windows = partition_windows(stream, &config.segmentation)?;
    let n_windows = windows.len();
    let mut voxels = Vec::new();
    for window in &windows {
        let n = voxel_count(window, &config.segmentation);
        voxels.extend(partition_voxels(window, n));
    }

    let params = config.weights;
    let work = || -> Vec<(Vec<Event>, VoxelReport)> {
        voxels
            .par_iter()
            .map(|voxel| process_voxel(voxel, &params))
            .collect()
    };
    let results = if config.threads == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?
            .install(work)
    };

    let mut kept_events = Vec::new();
    let mut voxel_reports = Vec::with_capacity(results.len());
    for (events, report) in results {
        kept_events.extend(events);
        voxel_reports.push(report);
    }
    let kept = EventStream::new(kept_events).sort_by_time();

    let report = PipelineReport {
        schema_version: REPORT_SCHEMA_VERSION,
        weights: config.weights,
        segmentation: config.segmentation,
        events_in: stream.len(),
        events_kept: kept.len(),
        events_removed: stream.len() - kept.len(),
        n_windows,
        n_voxels: voxel_reports.len(),
        voxels: voxel_reports,
    };
    Ok(PipelineOutput { kept, report })
}
