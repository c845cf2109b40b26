//! Core event data model: streams, CSV ingest/export, and extent scans.

use serde::Serialize;

use crate::error::{Error, Result};

/// One camera event: pixel coordinates, a microsecond timestamp, and a
/// polarity in `{-1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Event {
    /// Pixel column, `>= 0`.
    pub x: i64,
    /// Pixel row, `>= 0`.
    pub y: i64,
    /// Timestamp in microseconds, `>= 0`.
    pub t: i64,
    /// Polarity: `+1` (ON) or `-1` (OFF).
    pub p: i8,
}

impl Event {
    pub fn new(x: i64, y: i64, t: i64, p: i8) -> Self {
        debug_assert!(p == 1 || p == -1, "polarity must be +1 or -1");
        Self { x, y, t, p }
    }
}

/// An ordered sequence of events. `sorted_by_time` is only set by operations
/// that guarantee non-decreasing timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventStream {
    events: Vec<Event>,
    sorted_by_time: bool,
}

impl EventStream {
    /// Wraps events in file/arrival order; makes no ordering claim.
    pub fn new(events: Vec<Event>) -> Self {
        Self {
            events,
            sorted_by_time: false,
        }
    }

    /// Wraps events the caller has already ordered by `t`.
    pub(crate) fn from_sorted_unchecked(events: Vec<Event>) -> Self {
        debug_assert!(events.windows(2).all(|w| w[0].t <= w[1].t));
        Self {
            events,
            sorted_by_time: true,
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn sorted_by_time(&self) -> bool {
        self.sorted_by_time
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.events.iter()
    }

    /// Stable sort on `t`; ties keep their input order. Already-sorted
    /// streams pass through unchanged.
    pub fn sort_by_time(mut self) -> EventStream {
        if !self.sorted_by_time {
            self.events.sort_by_key(|e| e.t);
            self.sorted_by_time = true;
        }
        self
    }
}

/// Componentwise bounding box of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Extents {
    pub x_min: i64,
    pub x_max: i64,
    pub y_min: i64,
    pub y_max: i64,
    pub t_min: i64,
    pub t_max: i64,
}

impl Extents {
    pub fn x_range(&self) -> i64 {
        self.x_max - self.x_min
    }

    pub fn y_range(&self) -> i64 {
        self.y_max - self.y_min
    }

    pub fn t_range(&self) -> i64 {
        self.t_max - self.t_min
    }

    /// Bounding-box diagonal over all three axes, clamped below at 1 so it
    /// can serve as a normalizer for degenerate single-point boxes.
    pub fn diagonal(&self) -> f64 {
        let d = ((self.x_range() as f64).powi(2)
            + (self.y_range() as f64).powi(2)
            + (self.t_range() as f64).powi(2))
        .sqrt();
        d.max(1.0)
    }
}

/// Min/max scan over all events; errors on an empty stream.
pub fn compute_extents(stream: &EventStream) -> Result<Extents> {
    compute_extents_slice(stream.events())
}

pub(crate) fn compute_extents_slice(events: &[Event]) -> Result<Extents> {
    let first = events.first().ok_or(Error::EmptyStream)?;
    let mut e = Extents {
        x_min: first.x,
        x_max: first.x,
        y_min: first.y,
        y_max: first.y,
        t_min: first.t,
        t_max: first.t,
    };
    for ev in &events[1..] {
        e.x_min = e.x_min.min(ev.x);
        e.x_max = e.x_max.max(ev.x);
        e.y_min = e.y_min.min(ev.y);
        e.y_max = e.y_max.max(ev.y);
        e.t_min = e.t_min.min(ev.t);
        e.t_max = e.t_max.max(ev.t);
    }
    Ok(e)
}

const CSV_HEADER: &str = "x,y,t,p";

/// Parses the 4-column event CSV (`x,y,t,p`, one record per line, optional
/// header). Polarity `0` maps to `-1`, the common OFF-event export
/// convention. The result is in file order; no sortedness is claimed.
pub fn parse_event_csv(text: &str) -> Result<EventStream> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if idx == 0 && is_header(line) {
            continue;
        }
        let mut fields = [0i64; 4];
        let mut n = 0;
        for part in line.split(',') {
            if n == 4 {
                return Err(Error::Parse {
                    line: line_no,
                    reason: "expected 4 comma-separated fields".into(),
                });
            }
            fields[n] = part.trim().parse::<i64>().map_err(|_| Error::Parse {
                line: line_no,
                reason: format!("invalid integer field {:?}", part.trim()),
            })?;
            n += 1;
        }
        if n != 4 {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected 4 comma-separated fields, got {n}"),
            });
        }
        let [x, y, t, p_raw] = fields;
        if x < 0 || y < 0 || t < 0 {
            return Err(Error::Parse {
                line: line_no,
                reason: "coordinates and timestamp must be non-negative".into(),
            });
        }
        let p = match p_raw {
            1 => 1,
            -1 | 0 => -1,
            other => {
                return Err(Error::Polarity {
                    line: line_no,
                    value: other,
                })
            }
        };
        events.push(Event::new(x, y, t, p));
    }
    Ok(EventStream::new(events))
}

fn is_header(line: &str) -> bool {
    line.split(',')
        .map(str::trim)
        .eq(CSV_HEADER.split(','))
}

/// Renders a stream as `x,y,t,p` lines with LF terminators and no header.
/// Round-trips losslessly through [`parse_event_csv`].
pub fn write_event_csv(stream: &EventStream) -> String {
    let mut out = String::with_capacity(stream.len() * 16);
    for e in stream.iter() {
        out.push_str(&format!("{},{},{},{}\n", e.x, e.y, e.t, e.p));
    }
    out
}
