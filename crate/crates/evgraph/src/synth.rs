//! Seeded synthetic scenes with ground-truth signal/noise labels, plus
//! the confusion-matrix metrics used to score a denoising run.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::events::{Event, EventStream};

/// Shape of the moving object that emits the signal events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ObjectKind {
    MovingBar,
    MovingDisc,
}

/// Scene description. The seed fully determines the generated stream; the
/// generator draws from ChaCha8, a named portable algorithm, so golden
/// files are stable across platforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SynthConfig {
    pub width: i64,
    pub height: i64,
    /// Scene length in microseconds.
    pub duration: i64,
    /// Signal events per microsecond along the object trajectory.
    pub signal_rate: f64,
    /// Fraction of the final stream that is uniform noise, in [0, 1).
    pub noise_fraction: f64,
    pub object: ObjectKind,
    /// Object velocity in pixels per microsecond.
    pub velocity: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            duration: 1000,
            signal_rate: 1.0,
            noise_fraction: 0.3,
            object: ObjectKind::MovingBar,
            velocity: (0.25, 0.1),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 1 || self.height < 1 || self.duration < 1 {
            return Err(Error::Config(
                "scene dimensions and duration must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.noise_fraction) {
            return Err(Error::Config("noise_fraction must lie in [0, 1)".into()));
        }
        if self.signal_rate.is_nan() || self.signal_rate <= 0.0 {
            return Err(Error::Config("signal_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventLabel {
    Signal,
    Noise,
}

/// A generated stream with per-event ground truth, aligned by index.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEventStream {
    pub stream: EventStream,
    pub labels: Vec<EventLabel>,
}

/// Confusion-matrix style scores for a denoising run; signal is the
/// positive class and all values lie in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DenoiseMetrics {
    pub precision: f64,
    pub recall: f64,
    pub noise_removed_fraction: f64,
    pub input_noise_fraction: f64,
    pub output_noise_fraction: f64,
}

fn wrap(v: f64, modulus: i64) -> i64 {
    (v.round() as i64).rem_euclid(modulus)
}

/// Generates a labeled scene: signal events trace the edge pixels of the
/// moving object (polarity +1 on the leading edge, -1 on the trailing
/// edge, positions wrapping at the frame border), and noise events are
/// uniform over space, time, and polarity. The noise count is
/// `round(noise_fraction / (1 - noise_fraction) * signal_count)`. The
/// result is sorted by time with labels co-sorted.
pub fn generate(config: &SynthConfig) -> Result<LabeledEventStream> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (vx, vy) = config.velocity;
    let n_signal = ((config.signal_rate * config.duration as f64).round() as usize).max(1);

    let mut events = Vec::with_capacity(n_signal);
    let mut labels = Vec::with_capacity(n_signal);

    match config.object {
        ObjectKind::MovingBar => {
            let bar_w = (config.width / 16).max(2);
            let bar_h = (config.height / 2).max(2);
            let base_x = (config.width / 4) as f64;
            let base_y = ((config.height - bar_h) / 2) as f64;
            for _ in 0..n_signal {
                let t = rng.gen_range(0..config.duration);
                let pos_x = base_x + vx * t as f64;
                let pos_y = base_y + vy * t as f64;
                let leading = rng.gen_bool(0.5);
                let row = rng.gen_range(0..bar_h);
                // The face pointing along the motion is the leading edge.
                let front_is_right = vx >= 0.0;
                let x_f = if leading == front_is_right {
                    pos_x + (bar_w - 1) as f64
                } else {
                    pos_x
                };
                events.push(Event::new(
                    wrap(x_f, config.width),
                    wrap(pos_y + row as f64, config.height),
                    t,
                    if leading { 1 } else { -1 },
                ));
                labels.push(EventLabel::Signal);
            }
        }
        ObjectKind::MovingDisc => {
            let radius = (config.width.min(config.height) / 8).max(2) as f64;
            let base_x = (config.width / 2) as f64;
            let base_y = (config.height / 2) as f64;
            for _ in 0..n_signal {
                let t = rng.gen_range(0..config.duration);
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let (ox, oy) = (radius * phi.cos(), radius * phi.sin());
                let p = if ox * vx + oy * vy > 0.0 { 1 } else { -1 };
                events.push(Event::new(
                    wrap(base_x + vx * t as f64 + ox, config.width),
                    wrap(base_y + vy * t as f64 + oy, config.height),
                    t,
                    p,
                ));
                labels.push(EventLabel::Signal);
            }
        }
    }

    let n_noise = (config.noise_fraction / (1.0 - config.noise_fraction) * n_signal as f64)
        .round() as usize;
    for _ in 0..n_noise {
        events.push(Event::new(
            rng.gen_range(0..config.width),
            rng.gen_range(0..config.height),
            rng.gen_range(0..config.duration),
            if rng.gen_bool(0.5) { 1 } else { -1 },
        ));
        labels.push(EventLabel::Noise);
    }

    // Co-sort events and labels by time, stable in generation order.
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&k| events[k].t);
    let sorted_events: Vec<Event> = order.iter().map(|&k| events[k]).collect();
    let sorted_labels: Vec<EventLabel> = order.iter().map(|&k| labels[k]).collect();

    Ok(LabeledEventStream {
        stream: EventStream::from_sorted_unchecked(sorted_events),
        labels: sorted_labels,
    })
}

/// Scores a kept-index set against the ground-truth labels. Degenerate
/// denominators follow the vacuous-truth convention for the success ratios
/// (precision, recall, noise_removed_fraction all report 1 when both the
/// numerator and denominator sets are empty) while the two population
/// fractions report 0 over an empty population.
pub fn evaluate(labeled: &LabeledEventStream, kept_indices: &[usize]) -> Result<DenoiseMetrics> {
    let n = labeled.stream.len();
    let mut kept = vec![false; n];
    for &idx in kept_indices {
        if idx >= n {
            return Err(Error::InvalidArgument(format!(
                "kept index {idx} out of range for stream of {n}"
            )));
        }
        kept[idx] = true;
    }

    let mut signal_total = 0usize;
    let mut noise_total = 0usize;
    let mut signal_kept = 0usize;
    let mut noise_kept = 0usize;
    for (i, label) in labeled.labels.iter().enumerate() {
        match label {
            EventLabel::Signal => {
                signal_total += 1;
                if kept[i] {
                    signal_kept += 1;
                }
            }
            EventLabel::Noise => {
                noise_total += 1;
                if kept[i] {
                    noise_kept += 1;
                }
            }
        }
    }
    let kept_total = signal_kept + noise_kept;
    let noise_removed = noise_total - noise_kept;

    let ratio = |num: usize, den: usize| -> f64 {
        if den == 0 {
            if num == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            num as f64 / den as f64
        }
    };

    Ok(DenoiseMetrics {
        precision: ratio(signal_kept, kept_total),
        recall: ratio(signal_kept, signal_total),
        noise_removed_fraction: ratio(noise_removed, noise_total),
        input_noise_fraction: if n == 0 {
            0.0
        } else {
            noise_total as f64 / n as f64
        },
        output_noise_fraction: if kept_total == 0 {
            0.0
        } else {
            noise_kept as f64 / kept_total as f64
        },
    })
}

/// Recovers kept indices by matching a denoised stream back to the
/// original, consuming equal events first-come-first-served so duplicates
/// resolve deterministically. Errors if a kept event has no unconsumed
/// counterpart.
pub fn kept_indices_by_matching(original: &EventStream, kept: &EventStream) -> Result<Vec<usize>> {
    let mut slots: HashMap<Event, Vec<usize>> = HashMap::new();
    // Store indices in reverse so popping takes the earliest occurrence.
    for (i, e) in original.iter().enumerate().rev() {
        slots.entry(*e).or_default().push(i);
    }
    let mut indices = Vec::with_capacity(kept.len());
    for e in kept.iter() {
        let idx = slots
            .get_mut(e)
            .and_then(Vec::pop)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "kept event {},{},{},{} does not appear in the original stream",
                    e.x, e.y, e.t, e.p
                ))
            })?;
        indices.push(idx);
    }
    indices.sort_unstable();
    Ok(indices)
}
