//! Wavelength/channel assignment of a photonic convolution.
//!
//! Every output position of a filter is computed by one photodiode reading
//! `k²` consecutive wavelengths of one channel. Outputs whose `k×k` windows
//! overlap must live on different channels, so outputs are split into
//! residue classes `(y mod k, x mod k)`: within a class the windows tile the
//! input without overlap, and one class fills one channel.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};

/// What one wavelength of a channel carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tap {
    /// Flat input pixel `y·W + x`; `None` for padding or idle wavelengths.
    pub pixel: Option<usize>,
    /// Flat kernel index `i·k + j`.
    pub weight: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channel {
    pub filter: usize,
    /// Output position `(y, x)` read by each photodiode group, `None` if idle.
    pub outputs: Vec<Option<(usize, usize)>>,
    /// One entry per wavelength, `N` in total.
    pub taps: Vec<Tap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonicConvPlan {
    pub input_size: (usize, usize),
    pub output_size: (usize, usize),
    pub filter: usize,
    pub padding: usize,
    pub n_filters: usize,
    pub group_size: usize,
    pub n_groups: usize,
    pub n_wavelengths: usize,
    pub carrier_amplitude: f64,
    pub channels: Vec<Channel>,
}

/// Largest tile edge a single plan may cover.
pub const MAX_TILE: usize = 28;

fn residue_classes(ho: usize, wo: usize, k: usize) -> Vec<Vec<(usize, usize)>> {
    let mut classes = Vec::new();
    for ry in 0..k {
        for rx in 0..k {
            let members: Vec<_> = (ry..ho)
                .step_by(k)
                .flat_map(|y| (rx..wo).step_by(k).map(move |x| (y, x)))
                .collect();
            if !members.is_empty() {
                classes.push(members);
            }
        }
    }
    classes
}

/// Minimal channel count for a layer, one per filter and residue class.
pub fn minimal_channels(input_size: (usize, usize), filter: usize, n_filters: usize, padding: usize) -> Result<usize> {
    let (ho, wo) = output_size(input_size, filter, padding)?;
    Ok(n_filters * residue_classes(ho, wo, filter).len())
}

fn output_size((h, w): (usize, usize), k: usize, padding: usize) -> Result<(usize, usize)> {
    if k == 0 || h + 2 * padding < k || w + 2 * padding < k {
        return Err(Error::shape("plan_pconv", &[h, w], &[k, k]));
    }
    Ok((h + 2 * padding - k + 1, w + 2 * padding - k + 1))
}

/// Plans a stride-1 convolution of an `H×W` tile with `n_filters` `k×k` filters.
pub fn plan_pconv(input_size: (usize, usize), filter: usize, n_filters: usize, padding: usize) -> Result<PhotonicConvPlan> {
    let minimal = minimal_channels(input_size, filter, n_filters, padding)?;
    plan_pconv_with_channels(input_size, filter, n_filters, padding, minimal)
}

/// As [`plan_pconv`], but for a requested channel budget `P`. Channels beyond
/// the minimum stay idle.
pub fn plan_pconv_with_channels(
    input_size: (usize, usize),
    filter: usize,
    n_filters: usize,
    padding: usize,
    requested: usize,
) -> Result<PhotonicConvPlan> {
    if !matches!(filter, 1 | 3) {
        return Err(Error::param("filter", format!("photonic convolution supports 1x1 and 3x3, got {filter}x{filter}")));
    }
    let (h, w) = input_size;
    if h == 0 || w == 0 || h > MAX_TILE || w > MAX_TILE {
        return Err(Error::param("input_size", format!("tile {h}x{w} outside 1..={MAX_TILE}; tile larger inputs first")));
    }
    if n_filters == 0 {
        return Err(Error::param("n_filters", "must be at least 1"));
    }
    let (ho, wo) = output_size(input_size, filter, padding)?;
    let classes = residue_classes(ho, wo, filter);
    let minimal = n_filters * classes.len();
    if requested < minimal {
        return Err(Error::InfeasiblePlan { requested, minimal });
    }
    let k = filter;
    let group_size = k * k;
    let n_groups = classes.iter().map(Vec::len).max().unwrap_or(0);
    let n_wavelengths = n_groups * group_size;
    let mut channels = Vec::with_capacity(requested);
    for f in 0..n_filters {
        for class in &classes {
            let mut outputs = Vec::with_capacity(n_groups);
            let mut taps = Vec::with_capacity(n_wavelengths);
            for g in 0..n_groups {
                let pos = class.get(g).copied();
                outputs.push(pos);
                for i in 0..k {
                    for j in 0..k {
                        let pixel = pos.and_then(|(y, x)| {
                            let iy = (y + i).checked_sub(padding)?;
                            let ix = (x + j).checked_sub(padding)?;
                            (iy < h && ix < w).then_some(iy * w + ix)
                        });
                        taps.push(Tap { pixel, weight: i * k + j });
                    }
                }
            }
            channels.push(Channel { filter: f, outputs, taps });
        }
    }
    for _ in minimal..requested {
        channels.push(Channel {
            filter: 0,
            outputs: alloc::vec![None; n_groups],
            taps: (0..n_wavelengths).map(|j| Tap { pixel: None, weight: j % group_size }).collect(),
        });
    }
    Ok(PhotonicConvPlan {
        input_size,
        output_size: (ho, wo),
        filter,
        padding,
        n_filters,
        group_size,
        n_groups,
        n_wavelengths,
        carrier_amplitude: 1.0,
        channels,
    })
}

impl PhotonicConvPlan {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// True when no channel carries the same pixel on two wavelengths.
    pub fn is_collision_free(&self) -> bool {
        self.channels.iter().all(|ch| {
            let mut seen: Vec<usize> = ch.taps.iter().filter_map(|t| t.pixel).collect();
            let n = seen.len();
            seen.sort_unstable();
            seen.dedup();
            seen.len() == n
        })
    }

    /// Line-oriented dump: `channel wavelength pixel weight`, `-` for idle pixels.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# N={} K={} group={} P={} filter={}x{}",
            self.n_wavelengths,
            self.n_groups,
            self.group_size,
            self.n_channels(),
            self.filter,
            self.filter
        );
        for (c, ch) in self.channels.iter().enumerate() {
            for (j, t) in ch.taps.iter().enumerate() {
                let _ = match t.pixel {
                    Some(p) => writeln!(out, "{c} {j} {p} {}", t.weight),
                    None => writeln!(out, "{c} {j} - {}", t.weight),
                };
            }
        }
        out
    }
}

/// Fully-connected layer mapped on the matrix-vector multiplier: the input
/// vector is cut into segments of `segment` values, each segment riding one
/// channel of `segment` weight wavelengths, and per-segment photodiode sums
/// add up to the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MvmPlan {
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub segment: usize,
}

impl MvmPlan {
    pub fn new(n_inputs: usize, n_outputs: usize, segment: usize) -> Result<Self> {
        if n_inputs == 0 || n_outputs == 0 || segment == 0 {
            return Err(Error::param("mvm", "sizes must be positive"));
        }
        Ok(MvmPlan {
            n_inputs,
            n_outputs,
            segment: segment.min(n_inputs),
        })
    }

    pub fn n_wavelengths(&self) -> usize {
        self.segment
    }

    /// Channels (photodiode sums) per output neuron.
    pub fn channels_per_output(&self) -> usize {
        self.n_inputs.div_ceil(self.segment)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_3x3_example() {
        let p = plan_pconv((3, 3), 3, 1, 0).unwrap();
        assert_eq!((p.n_wavelengths, p.n_groups, p.n_channels()), (9, 1, 1));
        assert_eq!(p.group_size, 9);
        let pixels: Vec<_> = p.channels[0].taps.iter().map(|t| t.pixel.unwrap()).collect();
        assert_eq!(pixels, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn one_by_one_filter_has_single_wavelength_groups() {
        let p = plan_pconv((4, 4), 1, 2, 0).unwrap();
        assert_eq!(p.group_size, 1);
        assert_eq!(p.n_groups, 16);
        assert_eq!(p.n_channels(), 2);
    }

    #[test]
    fn full_tile_cover_is_exact() {
        let p = plan_pconv((28, 28), 3, 1, 1).unwrap();
        assert!(p.is_collision_free());
        assert_eq!(p.n_groups * p.group_size, p.n_wavelengths);
        let mut hits = alloc::vec![0usize; 28 * 28];
        for ch in &p.channels {
            for (g, out) in ch.outputs.iter().enumerate() {
                if let Some((y, x)) = out {
                    hits[y * 28 + x] += 1;
                    // the group's nine taps are exactly the padded window
                    for (t, tap) in ch.taps[g * 9..(g + 1) * 9].iter().enumerate() {
                        let (i, j) = (t / 3, t % 3);
                        let (iy, ix) = ((y + i) as isize - 1, (x + j) as isize - 1);
                        let inside = (0..28).contains(&iy) && (0..28).contains(&ix);
                        assert_eq!(tap.pixel, inside.then(|| iy as usize * 28 + ix as usize));
                        assert_eq!(tap.weight, t);
                    }
                }
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn infeasible_channel_budget_reports_minimum() {
        let err = plan_pconv_with_channels((8, 8), 3, 2, 1, 5).unwrap_err();
        assert_eq!(err, Error::InfeasiblePlan { requested: 5, minimal: 18 });
        assert_eq!(plan_pconv_with_channels((8, 8), 3, 2, 1, 20).unwrap().n_channels(), 20);
    }

    #[test]
    fn dump_has_one_line_per_wavelength() {
        let p = plan_pconv((3, 3), 3, 1, 0).unwrap();
        let d = p.dump();
        assert_eq!(d.lines().count(), 1 + 9);
        assert!(d.lines().nth(1).unwrap() == "0 0 0 0");
    }

    #[test]
    fn mvm_segments() {
        let m = MvmPlan::new(512 * 49, 4096, 49).unwrap();
        assert_eq!(m.n_wavelengths(), 49);
        assert_eq!(m.channels_per_output(), 512);
    }
}
