//! Tile pipeline schedule for the forward pass.
//!
//! The input is cut into 28×28 tiles, and tiles are grouped into blocks of
//! up to 2×2 that run one after another. Inside a block:
//!
//! - The first FE stage convolves one tile per clock slot; a stage with `r`
//!   back-to-back convolutions needs `r` slots before its first tile is ready.
//! - Features move between stages over a shared link. One move takes `T_FE`
//!   and carries [`FEATURES_PER_MOVE`] feature maps of 28×28 pixels. The link
//!   serves tiles round-robin, `T_sm / T_FE` moves at a time, and never idles
//!   while a released tile has features waiting. The receiving stage
//!   convolves features as they arrive.
//! - Before merging, every feature of a tile travels as its own 28×28 frame.
//! - Once the merged map of a block would be smaller than one tile, the
//!   tiles are merged: the transfer carries the block's actual pixel volume
//!   and the receiving stage works on whole-block maps. A merged map counts
//!   as one frame at the merge stage's output and a quarter frame per later
//!   pooling.
//! - The last stage needs its own `r` slots after its inputs arrive.
//!
//! The FC head adds `T_sm` plus `T_FE` per classifier stage; without a head
//! the result is read out in one `T_FE`.

use alloc::vec;
use alloc::vec::Vec;

use super::timing::TimingParams;
use crate::cnn::{NetworkConfig, StageKind};
use crate::error::Result;
use crate::photonic::TILE;

/// Feature maps carried by one data movement.
pub const FEATURES_PER_MOVE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EventKind {
    /// A stage finished convolving a tile (or a merged block).
    Convolved,
    /// A chunk of features reached a stage.
    Arrived,
    /// The tiles of a block were merged at a stage.
    Merged,
    BlockDone,
    FeDone,
    /// A classifier stage produced its output.
    Classified,
    Done,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Event {
    pub time_ps: f64,
    pub kind: EventKind,
    /// 1-based FE stage, or classifier stage for [`EventKind::Classified`].
    pub stage: usize,
    pub block: usize,
    /// Tile within the block; `None` once merged.
    pub tile: Option<usize>,
    pub features: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipelineTimeline {
    pub t_sm: f64,
    pub events: Vec<Event>,
}

impl PipelineTimeline {
    /// Time at which feature extraction finished.
    pub fn fe_latency_ps(&self) -> f64 {
        self.last(EventKind::FeDone)
    }

    pub fn total_ps(&self) -> f64 {
        self.last(EventKind::Done)
    }

    fn last(&self, kind: EventKind) -> f64 {
        self.events.iter().rev().find(|e| e.kind == kind).map_or(0.0, |e| e.time_ps)
    }

    pub fn find(&self, kind: EventKind, stage: usize, block: usize, tile: Option<usize>) -> Option<&Event> {
        self.events
            .iter()
            .find(|e| e.kind == kind && e.stage == stage && e.block == block && e.tile == tile)
    }

    /// Event time in clock slots.
    pub fn slots(&self, e: &Event) -> f64 {
        e.time_ps / self.t_sm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Group {
    repeats: usize,
    features: usize,
    pooled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Transfer {
    /// Per-tile frames: `moves` for each tile.
    PerTile { moves: usize },
    /// Tiles are merged on arrival; `moves` for the whole block.
    Merge { moves: usize },
    /// Merged block maps; `moves` for the whole block.
    Whole { moves: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct Shape {
    groups: Vec<Group>,
    fc_stages: usize,
    /// `(tile rows, tile cols)` of each block, in execution order.
    blocks: Vec<(usize, usize)>,
}

fn shape(network: &NetworkConfig) -> Result<Shape> {
    let groups = network
        .fe_groups()?
        .into_iter()
        .map(|g| Group {
            repeats: g.convs.iter().map(|c| c.2).sum(),
            features: g.output.0,
            pooled: g.pooled,
        })
        .collect();
    let fc_stages = network.stages.iter().filter(|s| s.kind == StageKind::Fc).count();
    let (h, w) = network.input_size;
    let (gh, gw) = (h.div_ceil(TILE), w.div_ceil(TILE));
    let mut blocks = Vec::new();
    for by in (0..gh).step_by(2) {
        for bx in (0..gw).step_by(2) {
            blocks.push(((gh - by).min(2), (gw - bx).min(2)));
        }
    }
    Ok(Shape {
        groups,
        fc_stages,
        blocks,
    })
}

/// Transfers between consecutive stages of a block with `tiles` tiles laid
/// out `side` tiles wide.
fn transfers(groups: &[Group], tiles: usize, side: usize) -> Vec<Transfer> {
    let frame = TILE * TILE * FEATURES_PER_MOVE;
    let mut out = Vec::new();
    let mut spatial = TILE;
    let mut merged_at: Option<usize> = None;
    let mut quarterings = 0u32;
    for i in 0..groups.len().saturating_sub(1) {
        let g = groups[i];
        match merged_at {
            None => {
                if g.pooled {
                    spatial /= 2;
                }
                if tiles > 1 && side * spatial < TILE {
                    let volume = tiles * g.features * spatial * spatial;
                    out.push(Transfer::Merge {
                        moves: volume.div_ceil(frame).max(1),
                    });
                    merged_at = Some(i + 1);
                } else {
                    out.push(Transfer::PerTile {
                        moves: g.features.div_ceil(FEATURES_PER_MOVE),
                    });
                }
            }
            Some(m) => {
                if i > m && g.pooled {
                    quarterings += 1;
                }
                let per_move = FEATURES_PER_MOVE << (2 * quarterings.min(28));
                out.push(Transfer::Whole {
                    moves: g.features.div_ceil(per_move),
                });
            }
        }
    }
    out
}

fn block_closed_form(groups: &[Group], tiles: usize, side: usize, timing: &TimingParams) -> f64 {
    let (t, f) = (timing.t_sm, timing.t_fe());
    let Some(first) = groups.first() else {
        return 0.0;
    };
    let r1 = first.repeats as f64;
    let n = tiles as f64;
    let last_ready = (r1 + n - 1.0) * t;
    if groups.len() == 1 {
        return last_ready;
    }
    let mut time = 0.0;
    for (i, tr) in transfers(groups, tiles, side).into_iter().enumerate() {
        time = match (i, tr) {
            // tiles are released one slot apart; the link is work-conserving
            (0, Transfer::PerTile { moves }) => {
                let m = moves as f64;
                f64::max(r1 * t + n * m * f, last_ready + m * f)
            }
            (0, Transfer::Merge { moves } | Transfer::Whole { moves }) => last_ready + moves as f64 * f,
            (_, Transfer::PerTile { moves }) => time + n * moves as f64 * f,
            (_, Transfer::Merge { moves } | Transfer::Whole { moves }) => time + moves as f64 * f,
        };
    }
    time + groups[groups.len() - 1].repeats as f64 * t
}

fn tail(shape: &Shape, timing: &TimingParams) -> f64 {
    if shape.fc_stages > 0 {
        timing.t_sm + shape.fc_stages as f64 * timing.t_fe()
    } else if shape.groups.is_empty() {
        0.0
    } else {
        timing.t_fe()
    }
}

/// Feature-extraction latency in picoseconds from the closed form.
pub fn closed_form_fe_latency(network: &NetworkConfig, timing: &TimingParams) -> Result<f64> {
    timing.validate()?;
    if network.stages.is_empty() {
        return Ok(0.0);
    }
    let s = shape(network)?;
    Ok(s.blocks
        .iter()
        .map(|&(r, c)| block_closed_form(&s.groups, r * c, r.max(c), timing))
        .sum())
}

/// Forward latency in picoseconds: feature extraction plus the classifier
/// tail.
pub fn forward_latency(network: &NetworkConfig, timing: &TimingParams) -> Result<f64> {
    if network.stages.is_empty() {
        timing.validate()?;
        return Ok(0.0);
    }
    let fe = closed_form_fe_latency(network, timing)?;
    Ok(fe + tail(&shape(network)?, timing))
}

/// Backward latency in picoseconds: one `T_b` per FE stage plus one for the
/// classifier head.
pub fn backward_latency(network: &NetworkConfig, timing: &TimingParams) -> Result<f64> {
    timing.validate()?;
    if network.stages.is_empty() {
        return Ok(0.0);
    }
    let s = shape(network)?;
    let stages = s.groups.len() + usize::from(s.fc_stages > 0);
    Ok(stages as f64 * timing.t_b())
}

struct Replay<'a> {
    groups: &'a [Group],
    timing: &'a TimingParams,
    events: Vec<Event>,
}

impl Replay<'_> {
    fn emit(&mut self, time_ps: f64, kind: EventKind, stage: usize, block: usize, tile: Option<usize>, features: usize) {
        self.events.push(Event {
            time_ps,
            kind,
            stage,
            block,
            tile,
            features,
        });
    }

    /// Runs one block from `start`, returning its finish time.
    fn block(&mut self, block: usize, start: f64, tiles: usize, side: usize) -> f64 {
        let groups = self.groups;
        let (t, f) = (self.timing.t_sm, self.timing.t_fe());
        let per_slot = self.timing.moves_per_slot();
        let s = groups.len();
        // first stage: one tile per slot once the pipeline is primed
        let mut ready = vec![0.0; tiles];
        let mut clock = start;
        for _ in 0..groups[0].repeats {
            clock += t;
        }
        for (k, r) in ready.iter_mut().enumerate() {
            *r = clock;
            clock += t;
            if s > 1 {
                self.emit(*r, EventKind::Convolved, 1, block, Some(k), groups[0].features);
            }
        }
        if s == 1 {
            let done = ready[tiles - 1];
            for k in 0..tiles {
                self.emit(done, EventKind::Convolved, 1, block, Some(k), groups[0].features);
            }
            self.emit(done, EventKind::BlockDone, 0, block, None, 0);
            return done;
        }
        let mut link = start;
        let mut merged = false;
        for (i, tr) in transfers(groups, tiles, side).into_iter().enumerate() {
            let (from, to) = (i + 1, i + 2);
            let release = if i == 0 { ready.clone() } else { vec![link; tiles] };
            match tr {
                Transfer::PerTile { moves } => {
                    let mut pending = vec![moves; tiles];
                    let mut sent = vec![0usize; tiles];
                    let mut next = 0;
                    while pending.iter().any(|&p| p > 0) {
                        let pick = (0..tiles)
                            .map(|d| (next + d) % tiles)
                            .find(|&k| pending[k] > 0 && release[k] <= link);
                        let Some(k) = pick else {
                            link = (0..tiles)
                                .filter(|&k| pending[k] > 0)
                                .map(|k| release[k])
                                .fold(f64::INFINITY, f64::min);
                            continue;
                        };
                        let chunk = pending[k].min(per_slot);
                        for _ in 0..chunk {
                            link += f;
                        }
                        pending[k] -= chunk;
                        sent[k] += chunk;
                        let arrived = (sent[k] * FEATURES_PER_MOVE).min(groups[i].features);
                        self.emit(link, EventKind::Arrived, to, block, Some(k), arrived);
                        if pending[k] == 0 && to < s {
                            self.emit(link, EventKind::Convolved, to, block, Some(k), groups[i + 1].features);
                        }
                        next = (k + 1) % tiles;
                    }
                }
                Transfer::Merge { moves } | Transfer::Whole { moves } => {
                    let mut now = release.iter().fold(link, |a, &b| a.max(b));
                    for _ in 0..moves {
                        now += f;
                    }
                    link = now;
                    self.emit(link, EventKind::Arrived, to, block, None, groups[from - 1].features);
                    if matches!(tr, Transfer::Merge { .. }) {
                        merged = true;
                        self.emit(link, EventKind::Merged, to, block, None, groups[to - 1].features);
                    }
                    if to < s {
                        self.emit(link, EventKind::Convolved, to, block, None, groups[to - 1].features);
                    }
                }
            }
        }
        let mut done = link;
        for _ in 0..groups[s - 1].repeats {
            done += t;
        }
        if merged {
            self.emit(done, EventKind::Convolved, s, block, None, groups[s - 1].features);
        } else {
            for k in 0..tiles {
                self.emit(done, EventKind::Convolved, s, block, Some(k), groups[s - 1].features);
            }
        }
        self.emit(done, EventKind::BlockDone, 0, block, None, 0);
        done
    }
}

/// Step-by-step replay of the schedule rules, emitting every event.
pub fn replay_schedule(network: &NetworkConfig, timing: &TimingParams) -> Result<PipelineTimeline> {
    timing.validate()?;
    let mut timeline = PipelineTimeline {
        t_sm: timing.t_sm,
        events: Vec::new(),
    };
    if network.stages.is_empty() {
        return Ok(timeline);
    }
    let s = shape(network)?;
    let mut replay = Replay {
        groups: &s.groups,
        timing,
        events: Vec::new(),
    };
    let mut clock = 0.0;
    if !s.groups.is_empty() {
        for (b, &(r, c)) in s.blocks.iter().enumerate() {
            clock = replay.block(b, clock, r * c, r.max(c));
        }
    }
    replay.emit(clock, EventKind::FeDone, 0, 0, None, 0);
    if s.fc_stages > 0 {
        clock += timing.t_sm;
        let widths: Vec<usize> = network
            .stages
            .iter()
            .filter(|st| st.kind == StageKind::Fc)
            .map(|st| st.out_channels)
            .collect();
        for (i, w) in widths.into_iter().enumerate() {
            clock += timing.t_fe();
            replay.emit(clock, EventKind::Classified, i + 1, 0, None, w);
        }
    } else if !s.groups.is_empty() {
        clock += timing.t_fe();
    }
    replay.emit(clock, EventKind::Done, 0, 0, None, 0);
    let mut events = replay.events;
    events.sort_by(|a, b| a.time_ps.total_cmp(&b.time_ps));
    timeline.events = events;
    Ok(timeline)
}

/// The forward-pass timeline.
pub fn pipeline_schedule(network: &NetworkConfig, timing: &TimingParams) -> Result<PipelineTimeline> {
    replay_schedule(network, timing)
}
