//! Epoch loop over either datapath, and test-set evaluation.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;

use crate::cnn::{BatchStats, Model, NetworkConfig, TrainParams};
use crate::error::{Error, Result};
use crate::noise::{NoiseCounters, NoiseModel};
use crate::photonic::{ConductanceState, PhotonicModel};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Datapath {
    #[default]
    Golden,
    Photonic,
}

impl Datapath {
    pub fn name(self) -> &'static str {
        match self {
            Datapath::Golden => "golden",
            Datapath::Photonic => "photonic",
        }
    }
}

impl fmt::Display for Datapath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Datapath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "golden" => Ok(Datapath::Golden),
            "photonic" => Ok(Datapath::Photonic),
            _ => Err(Error::param("datapath", alloc::format!("`{s}` is not golden or photonic"))),
        }
    }
}

/// Labelled images.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(images: Vec<Tensor>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::shape("dataset", &[images.len()], &[labels.len()]));
        }
        Ok(Dataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The first `n` samples.
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    fn check(&self, network: &NetworkConfig) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (h, w) = network.input_size;
        let shape = [network.input_channels, h, w];
        for (x, &y) in self.images.iter().zip(&self.labels) {
            if x.shape() != shape {
                return Err(Error::shape("dataset image", x.shape(), &shape));
            }
            if y >= network.num_classes {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    classes: network.num_classes,
                });
            }
        }
        Ok(())
    }
}

/// Accuracy of a model on a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    pub counters: NoiseCounters,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    /// Prediction error rate in percent.
    pub fn per(&self) -> f64 {
        100.0 * (1.0 - self.accuracy())
    }
}

/// Noise context of evaluation sample `i`; disjoint from training contexts.
pub fn eval_context(i: usize) -> u64 {
    (rng::tag::EVAL << 56) | i as u64
}

fn train_context(epoch: usize, position: usize) -> u64 {
    ((epoch as u64 + 1) << 32) | position as u64
}

/// Runs inference over `data` on the chosen datapath. The photonic path
/// keys its noise by sample index, so two noise models with the same seed
/// see the same random draws at every enabled site.
pub fn evaluate(model: &Model, data: &Dataset, datapath: Datapath, noise: &NoiseModel) -> Result<Evaluation> {
    data.check(&model.config)?;
    let mut eval = Evaluation {
        total: data.len(),
        ..Evaluation::default()
    };
    match datapath {
        Datapath::Golden => {
            for (x, &y) in data.images.iter().zip(&data.labels) {
                eval.correct += usize::from(model.predict(x)? == y);
            }
        }
        Datapath::Photonic => {
            let pm = PhotonicModel::program(model, noise)?;
            for (i, (x, &y)) in data.images.iter().zip(&data.labels).enumerate() {
                let (cache, c) = pm.forward(x, eval_context(i))?;
                eval.counters.merge(c);
                eval.correct += usize::from(cache.output().argmax() == y);
            }
        }
    }
    Ok(eval)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean training loss over the epoch.
    pub loss: f64,
    /// Accuracy of the forward passes made while training.
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub counters: NoiseCounters,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// Final conductances of a photonic run.
    pub conductances: Option<ConductanceState>,
    pub history: Vec<EpochStats>,
}

enum Runner {
    Golden(Model),
    Photonic(PhotonicModel),
}

/// Trains `network` from a seeded initialisation. With zero epochs the
/// initial model is returned unchanged.
pub fn train(
    network: &NetworkConfig,
    data: &Dataset,
    test: Option<&Dataset>,
    params: &TrainParams,
    datapath: Datapath,
    noise: &NoiseModel,
) -> Result<TrainOutcome> {
    train_with(network, data, test, params, datapath, noise, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    network: &NetworkConfig,
    data: &Dataset,
    test: Option<&Dataset>,
    params: &TrainParams,
    datapath: Datapath,
    noise: &NoiseModel,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    params.validate()?;
    noise.validate()?;
    network.validate()?;
    data.check(network)?;
    if let Some(t) = test {
        t.check(network)?;
    }
    let init = Model::init(network, params.rng_seed, params.bias_init)?;
    let mut runner = match datapath {
        Datapath::Golden => Runner::Golden(init),
        Datapath::Photonic => Runner::Photonic(PhotonicModel::program(&init, noise)?),
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        let mut shuffle = rng::stream(params.rng_seed, &[rng::tag::SHUFFLE, epoch as u64]);
        order.shuffle(&mut shuffle);
        let mut total = BatchStats::default();
        let mut counters = NoiseCounters::default();
        for (b, chunk) in order.chunks(params.batch_size).enumerate() {
            let stats = match &mut runner {
                Runner::Golden(m) => {
                    let batch: Vec<(&Tensor, usize)> = chunk.iter().map(|&i| (&data.images[i], data.labels[i])).collect();
                    m.train_batch(&batch, params)?
                }
                Runner::Photonic(pm) => {
                    let base = b * params.batch_size;
                    let batch: Vec<(&Tensor, usize, u64)> = chunk
                        .iter()
                        .enumerate()
                        .map(|(j, &i)| (&data.images[i], data.labels[i], train_context(epoch, base + j)))
                        .collect();
                    let (s, c) = pm.train_batch(&batch, params)?;
                    counters.merge(c);
                    s
                }
            };
            let finite = match &runner {
                Runner::Golden(m) => m.is_finite(),
                Runner::Photonic(pm) => pm.conductances.layers.iter().all(|l| l.values.iter().all(|v| v.is_finite())),
            };
            if !stats.loss.is_finite() || !finite {
                return Err(Error::Diverged { epoch: epoch + 1, batch: b });
            }
            total.loss += stats.loss;
            total.correct += stats.correct;
        }
        let test_accuracy = match test {
            Some(t) => Some(match &runner {
                Runner::Golden(m) => evaluate(m, t, Datapath::Golden, noise)?.accuracy(),
                Runner::Photonic(pm) => {
                    let e = evaluate(&pm.to_model()?, t, Datapath::Photonic, noise)?;
                    counters.merge(e.counters);
                    e.accuracy()
                }
            }),
            None => None,
        };
        let stats = EpochStats {
            epoch: epoch + 1,
            loss: total.loss / data.len() as f64,
            train_accuracy: total.correct as f64 / data.len() as f64,
            test_accuracy,
            counters,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(match runner {
        Runner::Golden(model) => TrainOutcome {
            model,
            conductances: None,
            history,
        },
        Runner::Photonic(pm) => TrainOutcome {
            model: pm.to_model()?,
            conductances: Some(pm.conductances),
            history,
        },
    })
}
