//! The assembled network: configuration, parameters, training state,
//! end-to-end forward/backward, RMSProp training, activation inspection and
//! bit-exact checkpoints.

mod checkpoint;
mod forward;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{forward, inspect_activations, recognize, ActivationReport, Mode};
pub use train::{loss_gradients, train, train_step, EpochStats, TrainOutcome};

use thiserror::Error;

use crate::ctc::CtcError;
use crate::dataset::DatasetError;
use crate::nn::{
    init_batchnorm, init_conv, init_dense, init_lstm, BatchNormParams, ConvParams, DenseParams,
    LstmParams,
};
use crate::rng::{stream_seed, SplitMix64};
use crate::scalar::Scalar;
use crate::tensor::{ShapeError, Tensor};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("conv layer {layer}: {message}")]
    Config { layer: usize, message: String },
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("record {record}: {source}")]
    Record { record: usize, source: CtcError },
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("evaluation: {0}")]
    Metrics(String),
    #[error("checkpoint: bad magic")]
    CheckpointMagic,
    #[error("checkpoint: unsupported version {0}")]
    CheckpointVersion(u16),
    #[error("checkpoint: missing section {0:?}")]
    CheckpointMissing(String),
    #[error("checkpoint: corrupt {0}")]
    CheckpointCorrupt(String),
    #[error("checkpoint: inconsistent contents: {0}")]
    CheckpointInconsistent(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Ordered symbol set. The CTC blank is implicit at index `size()` and never
/// appears among the symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<char>,
}

impl Vocabulary {
    pub fn new(symbols: Vec<char>) -> Result<Self, ModelError> {
        if symbols.is_empty() {
            return Err(ModelError::Vocabulary("no symbols".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for &s in &symbols {
            if !seen.insert(s) {
                return Err(ModelError::Vocabulary(format!("duplicate symbol {s:?}")));
            }
        }
        Ok(Self { symbols })
    }

    /// Default 38-symbol set: the 28 base Arabic letters followed by the ten
    /// Arabic-Indic digits.
    pub fn default_38() -> Self {
        let symbols = "ابتثجحخدذرزسشصضطظعغفقكلمنهوي٠١٢٣٤٥٦٧٨٩"
            .chars()
            .collect();
        Self::new(symbols).expect("built-in vocabulary is valid")
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn blank_index(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn index_of(&self, symbol: char) -> Option<usize> {
        self.symbols.iter().position(|&s| s == symbol)
    }

    /// Map a word to symbol indices; `Err` carries the first unknown symbol.
    pub fn encode(&self, word: &str) -> Result<Vec<usize>, char> {
        word.chars().map(|c| self.index_of(c).ok_or(c)).collect()
    }

    pub fn decode(&self, indices: &[usize]) -> String {
        indices
            .iter()
            .filter_map(|&i| self.symbols.get(i))
            .collect()
    }

    /// One symbol per line; line order defines the indices.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for &s in &self.symbols {
            out.push(s);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let mut symbols = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let mut chars = line.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => symbols.push(c),
                _ => {
                    return Err(ModelError::Vocabulary(format!(
                        "line {}: expected exactly one symbol, got {line:?}",
                        i + 1
                    )))
                }
            }
        }
        Self::new(symbols)
    }
}

/// One convolution block: kernel extents `(kh, kw)`, filter count, pooling
/// window `(along-width, along-height)` with stride equal to the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: (usize, usize),
    pub filters: usize,
    pub pool: (usize, usize),
}

/// Network architecture. The default instantiations are [`ModelConfig::paper`]
/// (full size) and [`ModelConfig::toy`] (same layout, thinner).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_width: usize,
    pub input_height: usize,
    pub conv: Vec<ConvSpec>,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub vocab_size: usize,
}

impl ModelConfig {
    /// Full-size configuration: five conv blocks
    /// (5x5/32, 5x5/64, 3x3/128, 3x3/128, 3x3/256) with pooling
    /// (2,2),(2,2),(1,2),(1,2),(1,2), and two bidirectional layers of 256
    /// hidden units, on 128x32 inputs.
    pub fn paper(vocab_size: usize) -> Self {
        Self {
            input_width: 128,
            input_height: 32,
            conv: vec![
                ConvSpec { kernel: (5, 5), filters: 32, pool: (2, 2) },
                ConvSpec { kernel: (5, 5), filters: 64, pool: (2, 2) },
                ConvSpec { kernel: (3, 3), filters: 128, pool: (1, 2) },
                ConvSpec { kernel: (3, 3), filters: 128, pool: (1, 2) },
                ConvSpec { kernel: (3, 3), filters: 256, pool: (1, 2) },
            ],
            lstm_hidden: 256,
            lstm_layers: 2,
            vocab_size,
        }
    }

    /// Reduced configuration for fast runs: halved filter counts and 64
    /// hidden units, same spatial layout.
    pub fn toy(vocab_size: usize) -> Self {
        let mut cfg = Self::paper(vocab_size);
        for spec in &mut cfg.conv {
            spec.filters /= 2;
        }
        cfg.lstm_hidden = 64;
        cfg
    }

    /// Post-pool `(width, height, channels)` per block; checks divisibility.
    pub fn shape_chain(&self) -> Result<Vec<[usize; 3]>, ModelError> {
        let mut w = self.input_width;
        let mut h = self.input_height;
        let mut chain = Vec::with_capacity(self.conv.len());
        for (i, spec) in self.conv.iter().enumerate() {
            if spec.kernel.0 % 2 == 0 || spec.kernel.1 % 2 == 0 {
                return Err(ModelError::Config {
                    layer: i,
                    message: format!("kernel extents {:?} must be odd", spec.kernel),
                });
            }
            let (px, py) = spec.pool;
            if px == 0 || py == 0 || !w.is_multiple_of(px) || !h.is_multiple_of(py) {
                return Err(ModelError::Config {
                    layer: i,
                    message: format!("pool {:?} does not divide extents {w}x{h}", spec.pool),
                });
            }
            w /= px;
            h /= py;
            chain.push([w, h, spec.filters]);
        }
        Ok(chain)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.conv.is_empty() || self.lstm_layers == 0 || self.vocab_size == 0 {
            return Err(ModelError::Config {
                layer: 0,
                message: "config needs conv blocks, lstm layers and a vocabulary".into(),
            });
        }
        let chain = self.shape_chain()?;
        let last = chain.last().unwrap();
        if last[1] != 1 {
            return Err(ModelError::Config {
                layer: self.conv.len() - 1,
                message: format!(
                    "final feature map height must be 1 to form a sequence, got {}",
                    last[1]
                ),
            });
        }
        Ok(())
    }

    /// Sequence length consumed by the recurrent stack (final feature width).
    pub fn sequence_steps(&self) -> usize {
        self.shape_chain()
            .map(|c| c.last().unwrap()[0])
            .unwrap_or(0)
    }

    /// Feature width per sequence step (final filter count).
    pub fn sequence_features(&self) -> usize {
        self.conv.last().map(|s| s.filters).unwrap_or(0)
    }

    pub fn logit_classes(&self) -> usize {
        self.vocab_size + 1
    }
}

/// Both directions of one bidirectional layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm<T> {
    pub fwd: LstmParams<T>,
    pub bwd: LstmParams<T>,
}

/// Every learnable tensor of the network plus the batch-norm running
/// statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub conv: Vec<ConvParams<T>>,
    pub bn: Vec<BatchNormParams<T>>,
    pub lstm: Vec<BiLstm<T>>,
    pub dense: DenseParams<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Deterministic initialization; layers draw from one seeded stream in a
    /// fixed order.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = SplitMix64::new(stream_seed(seed, 0x696E6974)); // "init"
        let mut cin = 1;
        let mut conv = Vec::new();
        let mut bn = Vec::new();
        for spec in &config.conv {
            conv.push(init_conv(spec.kernel.0, spec.kernel.1, cin, spec.filters, &mut rng));
            bn.push(init_batchnorm(spec.filters));
            cin = spec.filters;
        }
        let h = config.lstm_hidden;
        let mut lstm = Vec::new();
        let mut d = config.sequence_features();
        for _ in 0..config.lstm_layers {
            let fwd = init_lstm(d, h, &mut rng);
            let bwd = init_lstm(d, h, &mut rng);
            lstm.push(BiLstm { fwd, bwd });
            d = 2 * h;
        }
        let dense = init_dense(2 * h, config.logit_classes(), &mut rng);
        Ok(Self {
            conv,
            bn,
            lstm,
            dense,
        })
    }

    /// The parameter structure of `config` with every tensor zeroed; the
    /// checkpoint loader fills one of these in.
    pub fn zeros(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut cin = 1;
        let mut conv = Vec::new();
        let mut bn = Vec::new();
        for spec in &config.conv {
            conv.push(ConvParams {
                kernels: Tensor::zeros(&[spec.kernel.0, spec.kernel.1, cin, spec.filters]),
                bias: Tensor::zeros(&[spec.filters]),
            });
            let mut norm = init_batchnorm(spec.filters);
            norm.gamma = Tensor::zeros(&[spec.filters]);
            norm.running_var = Tensor::zeros(&[spec.filters]);
            bn.push(norm);
            cin = spec.filters;
        }
        let h = config.lstm_hidden;
        let mut lstm = Vec::new();
        let mut d = config.sequence_features();
        for _ in 0..config.lstm_layers {
            let cell = || LstmParams {
                w: Tensor::zeros(&[4 * h, d]),
                u: Tensor::zeros(&[4 * h, h]),
                b: Tensor::zeros(&[4 * h]),
            };
            lstm.push(BiLstm {
                fwd: cell(),
                bwd: cell(),
            });
            d = 2 * h;
        }
        let dense = DenseParams {
            weight: Tensor::zeros(&[config.logit_classes(), 2 * h]),
            bias: Tensor::zeros(&[config.logit_classes()]),
        };
        Ok(Self {
            conv,
            bn,
            lstm,
            dense,
        })
    }

    /// Same structure, all tensors zero. Gradient and optimizer accumulators
    /// reuse the parameter container so the stable tensor order lines up.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, t) in out.named_tensors_mut(true) {
            *t = Tensor::zeros(t.shape());
        }
        out
    }

    /// Tensors in a stable named order; `include_running` adds the
    /// batch-norm running statistics (wanted by checkpoints, not by the
    /// optimizer).
    pub fn named_tensors(&self, include_running: bool) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, c) in self.conv.iter().enumerate() {
            out.push((format!("conv{i}.kernels"), &c.kernels));
            out.push((format!("conv{i}.bias"), &c.bias));
        }
        for (i, b) in self.bn.iter().enumerate() {
            out.push((format!("bn{i}.gamma"), &b.gamma));
            out.push((format!("bn{i}.beta"), &b.beta));
            if include_running {
                out.push((format!("bn{i}.running_mean"), &b.running_mean));
                out.push((format!("bn{i}.running_var"), &b.running_var));
            }
        }
        for (i, l) in self.lstm.iter().enumerate() {
            for (dir, p) in [("fwd", &l.fwd), ("bwd", &l.bwd)] {
                out.push((format!("lstm{i}.{dir}.w"), &p.w));
                out.push((format!("lstm{i}.{dir}.u"), &p.u));
                out.push((format!("lstm{i}.{dir}.b"), &p.b));
            }
        }
        out.push(("dense.weight".into(), &self.dense.weight));
        out.push(("dense.bias".into(), &self.dense.bias));
        out
    }

    pub fn named_tensors_mut(&mut self, include_running: bool) -> Vec<(String, &mut Tensor<T>)> {
        let mut out: Vec<(String, &mut Tensor<T>)> = Vec::new();
        for (i, c) in self.conv.iter_mut().enumerate() {
            out.push((format!("conv{i}.kernels"), &mut c.kernels));
            out.push((format!("conv{i}.bias"), &mut c.bias));
        }
        for (i, b) in self.bn.iter_mut().enumerate() {
            out.push((format!("bn{i}.gamma"), &mut b.gamma));
            out.push((format!("bn{i}.beta"), &mut b.beta));
            if include_running {
                out.push((format!("bn{i}.running_mean"), &mut b.running_mean));
                out.push((format!("bn{i}.running_var"), &mut b.running_var));
            }
        }
        for (i, l) in self.lstm.iter_mut().enumerate() {
            for (dir, p) in [("fwd", &mut l.fwd), ("bwd", &mut l.bwd)] {
                out.push((format!("lstm{i}.{dir}.w"), &mut p.w));
                out.push((format!("lstm{i}.{dir}.u"), &mut p.u));
                out.push((format!("lstm{i}.{dir}.b"), &mut p.b));
            }
        }
        out.push(("dense.weight".into(), &mut self.dense.weight));
        out.push(("dense.bias".into(), &mut self.dense.bias));
        out
    }

    /// Accumulate another gradient set (same structure) into this one.
    pub fn accumulate(&mut self, other: &Self) {
        let theirs = other.named_tensors(true);
        for ((_, mine), (_, t)) in self.named_tensors_mut(true).into_iter().zip(theirs) {
            mine.add_assign(t).expect("identical structure");
        }
    }

    pub fn parameter_count(&self, include_running: bool) -> usize {
        self.named_tensors(include_running)
            .iter()
            .map(|(_, t)| t.len())
            .sum()
    }
}

/// Optimizer hyperparameters (RMSProp) plus the batch size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub batch_size: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            rho: 0.9,
            epsilon: 1e-8,
            batch_size: 32,
        }
    }
}

/// Everything a training run owns: parameters, squared-gradient
/// accumulators, the iteration counter and the master seed.
#[derive(Debug, Clone)]
pub struct TrainingState<T> {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams<T>,
    /// RMSProp accumulators, one per trainable tensor (same container
    /// shape as `params`; running-statistic slots stay zero).
    pub opt: ModelParams<T>,
    pub iteration: u64,
    pub seed: u64,
    pub hyper: Hyperparameters,
}

/// Initialize a training state with seeded parameters and zeroed optimizer
/// accumulators.
pub fn build_model<T: Scalar>(
    config: ModelConfig,
    vocab: Vocabulary,
    seed: u64,
) -> Result<TrainingState<T>, ModelError> {
    if vocab.size() != config.vocab_size {
        return Err(ModelError::CheckpointInconsistent(format!(
            "vocabulary has {} symbols but config expects {}",
            vocab.size(),
            config.vocab_size
        )));
    }
    let params = ModelParams::init(&config, seed)?;
    let opt = params.zeros_like();
    Ok(TrainingState {
        config,
        vocab,
        params,
        opt,
        iteration: 0,
        seed,
        hyper: Hyperparameters::default(),
    })
}
