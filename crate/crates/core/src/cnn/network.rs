//! Network descriptions and the bundled benchmark rows.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::ops::{conv_output_size, same_padding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum StageKind {
    Conv,
    Pool,
    Relu,
    Fc,
}

/// One row element of a network description.
///
/// `Conv` and `Fc` stages expand to `repeats` back-to-back layers. A `Relu`
/// stage directly after one of them activates every repeat. `Pool` stages
/// use `filter` as the window and stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Stage {
    pub kind: StageKind,
    pub filter: usize,
    pub out_channels: usize,
    pub repeats: usize,
}

impl Stage {
    pub fn conv(filter: usize, out_channels: usize, repeats: usize) -> Self {
        Stage {
            kind: StageKind::Conv,
            filter,
            out_channels,
            repeats,
        }
    }

    pub fn fc(width: usize, repeats: usize) -> Self {
        Stage {
            kind: StageKind::Fc,
            filter: 1,
            out_channels: width,
            repeats,
        }
    }

    pub fn relu() -> Self {
        Stage {
            kind: StageKind::Relu,
            filter: 1,
            out_channels: 0,
            repeats: 1,
        }
    }

    pub fn pool(window: usize) -> Self {
        Stage {
            kind: StageKind::Pool,
            filter: window,
            out_channels: 0,
            repeats: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkConfig {
    pub name: String,
    pub stages: Vec<Stage>,
    pub input_size: (usize, usize),
    pub input_channels: usize,
    pub num_classes: usize,
}

/// A single expanded layer with its input and output shapes (`C, H, W`;
/// fully-connected layers report `(width, 1, 1)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub stage: usize,
    pub kind: StageKind,
    pub filter: usize,
    pub input: (usize, usize, usize),
    pub output: (usize, usize, usize),
}

/// Feature-extraction group: the conv stages between two pooling points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeGroup {
    /// `(filter, out_channels, repeats)` of each conv stage in order.
    pub convs: Vec<(usize, usize, usize)>,
    pub input: (usize, usize, usize),
    pub output: (usize, usize, usize),
    pub pooled: bool,
}

impl NetworkConfig {
    /// Expands the stage list into layers, checking that shapes compose.
    pub fn layers(&self) -> Result<Vec<LayerShape>> {
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || self.input_channels == 0 {
            return Err(Error::InvalidNetwork {
                stage: 0,
                reason: "input extents must be positive".to_string(),
            });
        }
        let mut cur = (self.input_channels, h, w);
        let mut flat = false;
        let mut out = Vec::new();
        for (i, st) in self.stages.iter().enumerate() {
            let bad = |reason: String| Error::InvalidNetwork { stage: i, reason };
            match st.kind {
                StageKind::Conv => {
                    if flat {
                        return Err(bad("convolution after a fully-connected stage".to_string()));
                    }
                    if st.filter == 0 || st.filter % 2 == 0 || st.out_channels == 0 || st.repeats == 0 {
                        return Err(bad(format!(
                            "conv needs an odd filter and positive width and repeats, got {}x{}, {}, {}",
                            st.filter, st.filter, st.out_channels, st.repeats
                        )));
                    }
                    let p = same_padding(st.filter);
                    for _ in 0..st.repeats {
                        let ho = conv_output_size(cur.1, st.filter, 1, p)
                            .ok_or_else(|| bad(format!("filter {} larger than input {:?}", st.filter, cur)))?;
                        let wo = conv_output_size(cur.2, st.filter, 1, p)
                            .ok_or_else(|| bad(format!("filter {} larger than input {:?}", st.filter, cur)))?;
                        let next = (st.out_channels, ho, wo);
                        out.push(LayerShape {
                            stage: i,
                            kind: StageKind::Conv,
                            filter: st.filter,
                            input: cur,
                            output: next,
                        });
                        cur = next;
                    }
                }
                StageKind::Fc => {
                    if st.out_channels == 0 || st.repeats == 0 {
                        return Err(bad("fully-connected stage needs positive width and repeats".to_string()));
                    }
                    for _ in 0..st.repeats {
                        let n_in = cur.0 * cur.1 * cur.2;
                        let next = (st.out_channels, 1, 1);
                        out.push(LayerShape {
                            stage: i,
                            kind: StageKind::Fc,
                            filter: 1,
                            input: (n_in, 1, 1),
                            output: next,
                        });
                        cur = next;
                    }
                    flat = true;
                }
                StageKind::Relu => {
                    let prev = self.stages[..i].last().ok_or_else(|| bad("relu with no preceding layer".to_string()))?;
                    if !matches!(prev.kind, StageKind::Conv | StageKind::Fc) {
                        return Err(bad("relu must follow a conv or fc stage".to_string()));
                    }
                    // Interleave one activation after each repeat of the previous stage.
                    let reps = prev.repeats;
                    let start = out.len() - reps;
                    let mut interleaved = Vec::with_capacity(out.len() + reps);
                    interleaved.extend_from_slice(&out[..start]);
                    for l in &out[start..] {
                        interleaved.push(*l);
                        interleaved.push(LayerShape {
                            stage: i,
                            kind: StageKind::Relu,
                            filter: 1,
                            input: l.output,
                            output: l.output,
                        });
                    }
                    out = interleaved;
                }
                StageKind::Pool => {
                    if flat {
                        return Err(bad("pooling after a fully-connected stage".to_string()));
                    }
                    let k = st.filter;
                    if k == 0 || k > cur.1 || k > cur.2 {
                        return Err(bad(format!("pool window {k} does not fit input {:?}", cur)));
                    }
                    let next = (cur.0, (cur.1 - k) / k + 1, (cur.2 - k) / k + 1);
                    out.push(LayerShape {
                        stage: i,
                        kind: StageKind::Pool,
                        filter: k,
                        input: cur,
                        output: next,
                    });
                    cur = next;
                }
            }
        }
        Ok(out)
    }

    /// Shape of the network output.
    pub fn output_shape(&self) -> Result<(usize, usize, usize)> {
        let layers = self.layers()?;
        Ok(layers.last().map_or((self.input_channels, self.input_size.0, self.input_size.1), |l| l.output))
    }

    /// Checks composition and that the output width equals `num_classes`.
    pub fn validate(&self) -> Result<()> {
        let out = self.output_shape()?;
        let width = out.0 * out.1 * out.2;
        if width != self.num_classes {
            return Err(Error::InvalidNetwork {
                stage: self.stages.len(),
                reason: format!("output width {width} differs from {} classes", self.num_classes),
            });
        }
        Ok(())
    }

    /// Splits the conv part into feature-extraction groups; a group ends at a
    /// pooling stage or where the fully-connected head begins.
    pub fn fe_groups(&self) -> Result<Vec<FeGroup>> {
        let layers = self.layers()?;
        let mut groups = Vec::new();
        let mut current: Option<FeGroup> = None;
        let mut last_stage = usize::MAX;
        for l in &layers {
            match l.kind {
                StageKind::Conv => {
                    let g = current.get_or_insert_with(|| FeGroup {
                        convs: Vec::new(),
                        input: l.input,
                        output: l.output,
                        pooled: false,
                    });
                    if l.stage == last_stage {
                        g.convs.last_mut().expect("stage already opened").2 += 1;
                    } else {
                        g.convs.push((l.filter, l.output.0, 1));
                    }
                    g.output = l.output;
                    last_stage = l.stage;
                }
                StageKind::Pool => {
                    if let Some(mut g) = current.take() {
                        g.output = l.output;
                        g.pooled = true;
                        groups.push(g);
                    }
                }
                StageKind::Fc => {
                    if let Some(g) = current.take() {
                        groups.push(g);
                    }
                }
                StageKind::Relu => {}
            }
        }
        if let Some(g) = current {
            groups.push(g);
        }
        Ok(groups)
    }

    /// Number of fully-connected layers after expansion.
    pub fn fc_layer_count(&self) -> usize {
        self.stages
            .iter()
            .filter(|s| s.kind == StageKind::Fc)
            .map(|s| s.repeats)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Benchmark {
    VggA,
    VggB,
    VggC,
    VggD,
    LeNetA,
    LeNetB,
}

impl Benchmark {
    pub const ALL: [Benchmark; 6] = [
        Benchmark::VggA,
        Benchmark::VggB,
        Benchmark::VggC,
        Benchmark::VggD,
        Benchmark::LeNetA,
        Benchmark::LeNetB,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Benchmark::VggA => "vgg-a",
            Benchmark::VggB => "vgg-b",
            Benchmark::VggC => "vgg-c",
            Benchmark::VggD => "vgg-d",
            Benchmark::LeNetA => "lenet-a",
            Benchmark::LeNetB => "lenet-b",
        }
    }

    pub fn is_vgg(self) -> bool {
        matches!(self, Benchmark::VggA | Benchmark::VggB | Benchmark::VggC | Benchmark::VggD)
    }

    /// Feature-extraction rows as lists of `(filter, filters, repeats)`.
    pub fn fe_rows(self) -> Vec<Vec<(usize, usize, usize)>> {
        match self {
            Benchmark::VggA => vec![
                vec![(3, 64, 1)],
                vec![(3, 128, 1)],
                vec![(3, 256, 2)],
                vec![(3, 512, 2)],
                vec![(3, 512, 2)],
            ],
            Benchmark::VggB => vec![
                vec![(3, 64, 2)],
                vec![(3, 128, 2)],
                vec![(3, 256, 2), (1, 256, 1)],
                vec![(3, 512, 2), (1, 256, 1)],
                vec![(3, 512, 2), (1, 256, 1)],
            ],
            Benchmark::VggC => vec![
                vec![(3, 64, 2)],
                vec![(3, 128, 2)],
                vec![(3, 256, 3)],
                vec![(3, 512, 3)],
                vec![(3, 512, 3)],
            ],
            Benchmark::VggD => vec![
                vec![(3, 64, 2)],
                vec![(3, 128, 2)],
                vec![(3, 256, 4)],
                vec![(3, 512, 4)],
                vec![(3, 512, 4)],
            ],
            Benchmark::LeNetA => vec![
                vec![(3, 6, 1)],
                vec![(3, 6, 1)],
                vec![(3, 16, 2)],
                vec![(3, 16, 4)],
                vec![(3, 120, 1)],
            ],
            Benchmark::LeNetB => vec![
                vec![(3, 6, 1)],
                vec![(3, 6, 1)],
                vec![(3, 256, 1)],
                vec![(3, 16, 6)],
                vec![(3, 120, 1)],
            ],
        }
    }

    /// Classifier rows as `(width, repeats)`.
    pub fn fc_rows(self) -> Vec<(usize, usize)> {
        if self.is_vgg() {
            vec![(4096, 2), (1000, 1)]
        } else {
            vec![(84, 1)]
        }
    }

    pub fn default_input(self) -> ((usize, usize), usize, usize) {
        if self.is_vgg() {
            ((224, 224), 3, 1000)
        } else {
            ((28, 28), 1, 10)
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Benchmark::ALL
            .into_iter()
            .find(|b| b.id().replace('-', "") == norm)
            .ok_or_else(|| Error::UnknownBenchmark(s.to_string()))
    }
}

/// The network for a bundled benchmark at its native input size.
pub fn build_network(benchmark: Benchmark) -> NetworkConfig {
    let (size, channels, classes) = benchmark.default_input();
    build_network_for_input(benchmark, size, channels, classes).expect("bundled benchmark composes")
}

/// Builds a benchmark for a given input. Each FE row becomes its conv stages
/// with ReLU, followed by 2×2 pooling while the map is at least 2×2. An output
/// layer of `num_classes` is appended when the last classifier row differs.
pub fn build_network_for_input(
    benchmark: Benchmark,
    input_size: (usize, usize),
    input_channels: usize,
    num_classes: usize,
) -> Result<NetworkConfig> {
    let mut stages = Vec::new();
    let (mut h, mut w) = input_size;
    for row in benchmark.fe_rows() {
        for (k, c, r) in row {
            stages.push(Stage::conv(k, c, r));
            stages.push(Stage::relu());
        }
        if h >= 2 && w >= 2 {
            stages.push(Stage::pool(2));
            h /= 2;
            w /= 2;
        }
    }
    let mut last = 0;
    for (width, reps) in benchmark.fc_rows() {
        stages.push(Stage::fc(width, reps));
        stages.push(Stage::relu());
        last = width;
    }
    if last != num_classes {
        stages.push(Stage::fc(num_classes, 1));
        stages.push(Stage::relu());
    }
    let net = NetworkConfig {
        name: benchmark.id().to_string(),
        stages,
        input_size,
        input_channels,
        num_classes,
    };
    net.validate()?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_ids() {
        assert_eq!("VGG-A".parse::<Benchmark>().unwrap(), Benchmark::VggA);
        assert_eq!("lenet_b".parse::<Benchmark>().unwrap(), Benchmark::LeNetB);
        assert!(matches!("resnet".parse::<Benchmark>(), Err(Error::UnknownBenchmark(_))));
    }

    #[test]
    fn lenet_a_shape_trace() {
        let net = build_network(Benchmark::LeNetA);
        let groups = net.fe_groups().unwrap();
        let spatial: Vec<_> = groups.iter().map(|g| (g.input.1, g.output.1)).collect();
        assert_eq!(spatial, vec![(28, 14), (14, 7), (7, 3), (3, 1), (1, 1)]);
        assert_eq!(net.output_shape().unwrap(), (10, 1, 1));
        let fc: Vec<_> = net.layers().unwrap().into_iter().filter(|l| l.kind == StageKind::Fc).collect();
        assert_eq!(fc[0].input.0, 120);
        assert_eq!(fc[0].output.0, 84);
    }

    #[test]
    fn vgg_a_shape_trace() {
        let net = build_network(Benchmark::VggA);
        let groups = net.fe_groups().unwrap();
        let widths: Vec<_> = groups.iter().map(|g| g.output.0).collect();
        assert_eq!(widths, vec![64, 128, 256, 512, 512]);
        assert_eq!(groups[4].output, (512, 7, 7));
        assert_eq!(net.fc_layer_count(), 3);
    }

    #[test]
    fn rejects_bad_grammar() {
        let net = NetworkConfig {
            name: "bad".to_string(),
            stages: vec![Stage::fc(4, 1), Stage::conv(3, 2, 1)],
            input_size: (4, 4),
            input_channels: 1,
            num_classes: 2,
        };
        assert!(matches!(net.layers(), Err(Error::InvalidNetwork { stage: 1, .. })));
        let pool_too_big = NetworkConfig {
            stages: vec![Stage::pool(2)],
            input_size: (1, 1),
            ..net
        };
        assert!(pool_too_big.layers().is_err());
    }
}
