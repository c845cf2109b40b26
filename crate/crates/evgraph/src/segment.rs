//! Density-adaptive stream segmentation: capacity-balanced windows split
//! into equal-duration time-interval voxels.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::events::{compute_extents, Event, EventStream};

/// Knobs for the two-level segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentationConfig {
    /// Minimum number of events per window.
    pub n_min: usize,
    /// Scale factor applied to the normalized density when sizing windows.
    pub c_scale: f64,
    /// Lower clamp on the per-window voxel count.
    pub n_min_vox: usize,
    /// Upper clamp on the per-window voxel count.
    pub n_max_vox: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            n_min: 512,
            c_scale: 1024.0,
            n_min_vox: 4,
            n_max_vox: 64,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_min < 1 {
            return Err(Error::Config("n_min must be >= 1".into()));
        }
        if self.c_scale.is_nan() || self.c_scale <= 0.0 {
            return Err(Error::Config("c_scale must be positive".into()));
        }
        if self.n_min_vox < 1 || self.n_min_vox > self.n_max_vox {
            return Err(Error::Config(
                "voxel clamp must satisfy 1 <= n_min_vox <= n_max_vox".into(),
            ));
        }
        Ok(())
    }
}

/// A capacity-sized run of time-sorted events.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    events: EventStream,
    pub index: usize,
}

impl Window {
    pub fn events(&self) -> &[Event] {
        self.events.events()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// A time-interval slice of a window. Contained events satisfy
/// `t_lo <= t < t_hi`; the last voxel of a window is closed on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct Voxel {
    events: EventStream,
    pub window_index: usize,
    pub voxel_index: usize,
    pub t_lo: i64,
    pub t_hi: i64,
}

impl Voxel {
    /// Builds a standalone voxel from raw events, mainly for tests and
    /// direct graph experiments. Events are sorted by time.
    pub fn from_events(events: Vec<Event>) -> Self {
        let stream = EventStream::new(events).sort_by_time();
        let (t_lo, t_hi) = match (stream.events().first(), stream.events().last()) {
            (Some(a), Some(b)) => (a.t, b.t),
            _ => (0, 0),
        };
        Self {
            events: stream,
            window_index: 0,
            voxel_index: 0,
            t_lo,
            t_hi,
        }
    }

    pub fn events(&self) -> &[Event] {
        self.events.events()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Event count divided by the spatiotemporal volume of the stream's
/// bounding box, each axis range clamped below at 1 unit so degenerate
/// single-plane or single-instant data cannot divide by zero.
pub fn normalized_density(stream: &EventStream) -> Result<f64> {
    let e = compute_extents(stream)?;
    let volume = (e.x_range().max(1) as f64)
        * (e.y_range().max(1) as f64)
        * (e.t_range().max(1) as f64);
    Ok(stream.len() as f64 / volume)
}

/// Events per window: `max(n_min, floor(density * c_scale))`.
pub fn window_capacity(density: f64, config: &SegmentationConfig) -> usize {
    let scaled = (density * config.c_scale).floor();
    config.n_min.max(scaled as usize)
}

/// Ceiling division of the event count by the window capacity.
pub fn window_count(n_points: usize, capacity: usize) -> usize {
    n_points.div_ceil(capacity)
}

/// Globally sorts by time, then chunks into consecutive runs of
/// `window_capacity` events; the final window takes the remainder.
pub fn partition_windows(stream: &EventStream, config: &SegmentationConfig) -> Result<Vec<Window>> {
    config.validate()?;
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    let density = normalized_density(stream)?;
    let capacity = window_capacity(density, config);
    let sorted = stream.clone().sort_by_time();
    let windows = sorted
        .events()
        .chunks(capacity)
        .enumerate()
        .map(|(index, chunk)| Window {
            events: EventStream::from_sorted_unchecked(chunk.to_vec()),
            index,
        })
        .collect();
    Ok(windows)
}

/// Square-root law: `round(sqrt(X * Y * T))` over the window's spans (each
/// clamped below at 1), clamped into `[n_min_vox, n_max_vox]`.
pub fn voxel_count(window: &Window, config: &SegmentationConfig) -> usize {
    let e = compute_extents(&window.events).expect("window is non-empty");
    let product = (e.x_range().max(1) as f64)
        * (e.y_range().max(1) as f64)
        * (e.t_range().max(1) as f64);
    let raw = product.sqrt().round() as usize;
    raw.clamp(config.n_min_vox, config.n_max_vox)
}

/// Splits the window's time span into `n_voxels` equal-duration intervals
/// and buckets each event by timestamp. Empty voxels are retained. A
/// zero-length span is widened to 1 unit so the interval math stays exact.
pub fn partition_voxels(window: &Window, n_voxels: usize) -> Vec<Voxel> {
    assert!(n_voxels >= 1, "n_voxels must be >= 1");
    let events = window.events();
    let t_min = events.first().map_or(0, |e| e.t);
    let t_max = events.last().map_or(0, |e| e.t);
    let span = (t_max - t_min).max(1) as i128;
    let n = n_voxels as i128;

    // Integer interval bounds: voxel k covers [bound(k), bound(k+1)).
    let bound = |k: i128| -> i64 { t_min + ((k * span + n - 1) / n) as i64 };

    let mut buckets: Vec<Vec<Event>> = vec![Vec::new(); n_voxels];
    for e in events {
        let offset = (e.t - t_min) as i128;
        let idx = ((offset * n / span) as usize).min(n_voxels - 1);
        buckets[idx].push(*e);
    }

    buckets
        .into_iter()
        .enumerate()
        .map(|(k, bucket)| Voxel {
            events: EventStream::from_sorted_unchecked(bucket),
            window_index: window.index,
            voxel_index: k,
            t_lo: bound(k as i128),
            t_hi: bound(k as i128 + 1),
        })
        .collect()
}

/// Full segmentation: density, adaptive window capacity, window chunking,
/// per-window voxel counts, and time-interval voxelization, in
/// `(window, voxel)` order.
pub fn segment(stream: &EventStream, config: &SegmentationConfig) -> Result<Vec<Voxel>> {
    let windows = partition_windows(stream, config)?;
    let mut voxels = Vec::new();
    for window in &windows {
        let n = voxel_count(window, config);
        voxels.extend(partition_voxels(window, n));
    }
    Ok(voxels)
}
