use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::{Dense, Lstm, PositionalEncodingTable, ResidualBlock, SelfAttention};
use crate::model::generator::Generator;
use crate::model::mask::{MaskMode, RationaleMask};
use crate::params::{Binding, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{Result, Tensor, TensorError};
use crate::train::{ConfigError, Estimator, EvalMask, ModelConfig};

/// RNG stream used for weight initialisation (training uses stream 0).
pub const INIT_STREAM: u64 = 1;
/// Longest sequence the positional table covers.
pub const MAX_STEPS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Rationalising LSTM + attention classifier.
    Proposed,
    /// Residual block, LSTM, last hidden state, softmax.
    Lstm,
    /// One hidden layer of `nn_hidden` ReLU units on the flattened episode.
    Nn,
    /// Logistic regression on the flattened episode.
    Lr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Proposed, ModelKind::Lstm, ModelKind::Nn, ModelKind::Lr];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Proposed => "proposed",
            ModelKind::Lstm => "lstm",
            ModelKind::Nn => "nn",
            ModelKind::Lr => "lr",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown model kind {s:?} (expected proposed, lstm, nn or lr)")))
    }
}

/// Where masks come from in a forward pass of the proposed model.
#[derive(Debug, Clone, Copy)]
pub enum MaskPolicy<'a> {
    Sample,
    Threshold,
    /// Caller-supplied masks, one per sample.
    Fixed(&'a [RationaleMask]),
}

impl From<EvalMask> for MaskPolicy<'_> {
    fn from(m: EvalMask) -> Self {
        match m {
            EvalMask::Threshold => MaskPolicy::Threshold,
            EvalMask::Sample => MaskPolicy::Sample,
        }
    }
}

/// Tape handles produced by [`Model::forward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `[B, 2]`
    pub logits: Var,
    /// `[B, 2]`, column 1 is the positive class.
    pub class_probs: Var,
    /// Masks used, when the model has a rational stage.
    pub masks: Option<Vec<RationaleMask>>,
    /// Generator probabilities `[B, T]`.
    pub mask_probs: Option<Var>,
    /// Straight-through relaxed mask `[B, T]`, only in that estimator mode.
    pub relaxed_mask: Option<Var>,
    /// `[B, T, T]` attention weights.
    pub attention: Option<Var>,
}

/// Result of classifying a single episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutput {
    pub prob_positive: f64,
    pub logits: [f64; 2],
    /// Attention restricted to selected timesteps, `T' × T'`.
    pub attention_weights: Option<Tensor>,
    /// The mask selected nothing and the classifier ran on a zero sequence.
    pub empty_mask: bool,
}

#[derive(Debug, Clone)]
struct Proposed {
    pe: Option<PositionalEncodingTable>,
    lstm: Lstm,
    attention: Option<SelfAttention>,
    residual: Vec<ResidualBlock>,
    head: Dense,
    generator: Option<Generator>,
}

#[derive(Debug, Clone)]
enum Arch {
    Proposed(Proposed),
    Lstm {
        residual: ResidualBlock,
        lstm: Lstm,
        head: Dense,
    },
    Nn {
        hidden: Dense,
        head: Dense,
    },
    Lr {
        linear: Dense,
    },
}

/// Any of the four classifiers, with its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    kind: ModelKind,
    config: ModelConfig,
    params: ParamStore,
    arch: Arch,
}

impl Model {
    pub fn new(kind: ModelKind, config: &ModelConfig) -> std::result::Result<Self, ConfigError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(INIT_STREAM);
        let mut store = ParamStore::new();
        let f = config.d_model;
        let flat = MAX_STEPS * f;
        let arch = match kind {
            ModelKind::Proposed => {
                let v = config.variant;
                // the generator is built last so switching it off leaves the
                // classifier's initial weights unchanged
                let lstm = Lstm::new(&mut store, &mut rng, "lstm", f, config.lstm_hidden);
                let attention = v
                    .attention
                    .then(|| SelfAttention::new(&mut store, &mut rng, "attention", config.lstm_hidden, config.d_k));
                let residual = if v.residual {
                    (0..config.residual_blocks)
                        .map(|i| {
                            ResidualBlock::new(
                                &mut store,
                                &mut rng,
                                &format!("residual{i}"),
                                config.lstm_hidden,
                                config.residual_width,
                            )
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                let head = Dense::new(&mut store, &mut rng, "head", config.lstm_hidden, 2);
                let generator = v.rational.then(|| {
                    Generator::new(&mut store, &mut rng, f, config.generator_hidden, config.generator_init_bias)
                });
                Arch::Proposed(Proposed {
                    pe: v.pe.then(|| PositionalEncodingTable::new(MAX_STEPS, f)),
                    lstm,
                    attention,
                    residual,
                    head,
                    generator,
                })
            }
            ModelKind::Lstm => Arch::Lstm {
                residual: ResidualBlock::new(&mut store, &mut rng, "residual0", f, config.residual_width),
                lstm: Lstm::new(&mut store, &mut rng, "lstm", f, config.lstm_hidden),
                head: Dense::new(&mut store, &mut rng, "head", config.lstm_hidden, 2),
            },
            ModelKind::Nn => Arch::Nn {
                hidden: Dense::new(&mut store, &mut rng, "hidden", flat, config.nn_hidden),
                head: Dense::new(&mut store, &mut rng, "head", config.nn_hidden, 2),
            },
            ModelKind::Lr => Arch::Lr {
                linear: Dense::new(&mut store, &mut rng, "linear", flat, 1),
            },
        };
        Ok(Self {
            kind,
            config: config.clone(),
            params: store,
            arch,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Replaces all parameters, checking names and shapes against the architecture.
    pub fn load_params(&mut self, params: ParamStore) -> std::result::Result<(), ConfigError> {
        if params.len() != self.params.len() {
            return Err(ConfigError::Invalid(format!(
                "parameter count mismatch: architecture has {}, checkpoint has {}",
                self.params.len(),
                params.len()
            )));
        }
        for ((name, expected), (got_name, got)) in self.params.iter().zip(params.iter()) {
            if name != got_name || expected.shape() != got.shape() {
                return Err(ConfigError::Invalid(format!(
                    "parameter {got_name} {:?} does not match {name} {:?}",
                    got.shape(),
                    expected.shape()
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    /// Whether the model samples masks (proposed model with the rational stage on).
    pub fn has_generator(&self) -> bool {
        matches!(&self.arch, Arch::Proposed(p) if p.generator.is_some())
    }

    pub fn has_attention(&self) -> bool {
        matches!(&self.arch, Arch::Proposed(p) if p.attention.is_some())
    }

    /// Focal parameters used in training. Baselines use plain cross-entropy.
    pub fn focal_params(&self) -> (f64, f64) {
        match self.kind {
            ModelKind::Proposed => self.config.focal_params(),
            _ => (1.0, 0.0),
        }
    }

    /// Feature count expected per timestep.
    pub fn features(&self) -> usize {
        self.config.d_model
    }

    /// Records the model on `tape` for `inputs: [B, T, features]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &Binding,
        inputs: &Tensor,
        policy: MaskPolicy<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardPass> {
        let shape = inputs.shape().to_vec();
        let [batch, steps, features] = shape[..] else {
            return Err(TensorError::Invalid {
                op: "model",
                msg: format!("expected [B, T, f] inputs, got {shape:?}"),
            });
        };
        if features != self.features() || steps > MAX_STEPS {
            return Err(TensorError::ShapeMismatch {
                op: "model",
                left: shape,
                right: vec![MAX_STEPS, self.features()],
            });
        }
        let x = tape.constant(inputs.clone());
        match &self.arch {
            Arch::Proposed(p) => {
                let encoded = match &p.pe {
                    Some(pe) => pe.encode(tape, x)?,
                    None => x,
                };
                self.proposed_pass(p, tape, params, encoded, policy, rng)
            }
            Arch::Lstm { residual, lstm, head } => {
                let h = residual.forward(tape, params, x)?;
                let h = lstm.forward(tape, params, h)?;
                let last = tape.slice(h, 1, steps - 1, steps)?;
                let last = tape.reshape(last, &[batch, lstm.hidden])?;
                let logits = head.forward(tape, params, last)?;
                plain_pass(tape, logits)
            }
            Arch::Nn { hidden, head } => {
                let flat = tape.reshape(x, &[batch, steps * features])?;
                let h = hidden.forward(tape, params, flat)?;
                let h = tape.relu(h)?;
                let logits = head.forward(tape, params, h)?;
                plain_pass(tape, logits)
            }
            Arch::Lr { linear } => {
                let flat = tape.reshape(x, &[batch, steps * features])?;
                let score = linear.forward(tape, params, flat)?;
                let zero = tape.constant(Tensor::zeros(&[batch, 1]));
                let logits = tape.concat(&[zero, score], 1)?;
                plain_pass(tape, logits)
            }
        }
    }

    fn proposed_pass(
        &self,
        p: &Proposed,
        tape: &mut Tape,
        params: &Binding,
        encoded: Var,
        policy: MaskPolicy<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardPass> {
        let [batch, steps, _] = tape.shape(encoded)[..] else {
            unreachable!("checked by caller")
        };
        let Some(generator) = &p.generator else {
            let (logits, class_probs, attention) = self.classify_encoded(p, tape, params, encoded, None, None)?;
            return Ok(ForwardPass {
                logits,
                class_probs,
                masks: None,
                mask_probs: None,
                relaxed_mask: None,
                attention,
            });
        };
        let probs = generator.probabilities(tape, params, encoded)?;
        let values = tape.value(probs).data().to_vec();
        let masks: Vec<RationaleMask> = match policy {
            MaskPolicy::Sample => values
                .chunks(steps)
                .map(|c| RationaleMask::draw(c.to_vec(), MaskMode::Sample, rng))
                .collect(),
            MaskPolicy::Threshold => values
                .chunks(steps)
                .map(|c| RationaleMask::draw(c.to_vec(), MaskMode::Threshold, rng))
                .collect(),
            MaskPolicy::Fixed(given) => {
                if given.len() != batch || given.iter().any(|m| m.len() != steps) {
                    return Err(TensorError::Invalid {
                        op: "model",
                        msg: format!("expected {batch} masks of length {steps}"),
                    });
                }
                given.to_vec()
            }
        };
        let z: Vec<f64> = masks.iter().flat_map(|m| m.z.iter().map(|&v| f64::from(v))).collect();
        let relaxed = if self.config.estimator == Estimator::StraightThrough && matches!(policy, MaskPolicy::Sample) {
            let offset: Vec<f64> = z.iter().zip(&values).map(|(z, p)| z - p).collect();
            let offset = tape.constant(Tensor::new(vec![batch, steps], offset)?);
            Some(tape.add(probs, offset)?)
        } else {
            None
        };
        let (logits, class_probs, attention) = self.classify_encoded(p, tape, params, encoded, Some(&z), relaxed)?;
        Ok(ForwardPass {
            logits,
            class_probs,
            masks: Some(masks),
            mask_probs: Some(probs),
            relaxed_mask: relaxed,
            attention,
        })
    }

    /// Masked sequence → LSTM → attention → residual blocks → masked mean
    /// pooling → two-way softmax. Unselected timesteps are zeroed in place;
    /// attention and pooling only look at selected timesteps.
    fn classify_encoded(
        &self,
        p: &Proposed,
        tape: &mut Tape,
        params: &Binding,
        encoded: Var,
        z: Option<&[f64]>,
        relaxed: Option<Var>,
    ) -> Result<(Var, Var, Option<Var>)> {
        let [batch, steps, _] = tape.shape(encoded)[..] else {
            unreachable!("checked by caller")
        };
        let masked = match (relaxed, z) {
            (Some(m), _) => tape.scale_rows(encoded, m)?,
            (None, Some(z)) => {
                let zc = tape.constant(Tensor::new(vec![batch, steps], z.to_vec())?);
                tape.scale_rows(encoded, zc)?
            }
            (None, None) => encoded,
        };
        let hidden = p.lstm.forward(tape, params, masked)?;
        let key_mask = z.filter(|z| z.iter().any(|&v| v == 0.0));
        let (mut features, attention) = match &p.attention {
            Some(att) => {
                let out = att.forward(tape, params, hidden, key_mask)?;
                (out.output, Some(out.weights))
            }
            None => (hidden, None),
        };
        for block in &p.residual {
            features = block.forward(tape, params, features)?;
        }
        let weights = tape.constant(pooling_weights(z, batch, steps));
        let pooled = tape.matmul(weights, features)?;
        let pooled = tape.reshape(pooled, &[batch, p.lstm.hidden])?;
        let logits = p.head.forward(tape, params, pooled)?;
        let class_probs = tape.softmax(logits, 1)?;
        Ok((logits, class_probs, attention))
    }

    fn proposed(&self) -> Result<&Proposed> {
        match &self.arch {
            Arch::Proposed(p) => Ok(p),
            _ => Err(TensorError::Invalid {
                op: "model",
                msg: format!("{} model has no rationalising block", self.kind),
            }),
        }
    }

    /// Adds the positional encoding to one `[T, features]` episode (a no-op
    /// when the encoding is switched off or the model is a baseline).
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        match &self.arch {
            Arch::Proposed(Proposed { pe: Some(pe), .. }) => {
                let e = pe.encode(&mut tape, v)?;
                Ok(tape.value(e).clone())
            }
            _ => Ok(x.clone()),
        }
    }

    /// Mask for one positionally encoded `[T, features]` episode.
    pub fn generate_mask(&self, x_encoded: &Tensor, mode: MaskMode, rng: &mut ChaCha8Rng) -> Result<RationaleMask> {
        let p = self.proposed()?;
        let steps = x_encoded.shape()[0];
        let Some(generator) = &p.generator else {
            return Ok(RationaleMask::all_selected(steps));
        };
        let mut tape = Tape::new();
        let params = self.params.bind(&mut tape, false);
        let x = tape.constant(x_encoded.clone().reshaped(vec![1, steps, self.features()])?);
        let probs = generator.probabilities(&mut tape, &params, x)?;
        Ok(RationaleMask::draw(tape.value(probs).data().to_vec(), mode, rng))
    }

    /// Classifier output for one positionally encoded `[T, features]`
    /// episode under mask `mask`.
    pub fn classify(&self, x_encoded: &Tensor, mask: &RationaleMask) -> Result<ClassifierOutput> {
        let p = self.proposed()?;
        let steps = x_encoded.shape()[0];
        if mask.len() != steps {
            return Err(TensorError::Invalid {
                op: "classify",
                msg: format!("mask length {} for {steps} timesteps", mask.len()),
            });
        }
        let mut tape = Tape::new();
        let params = self.params.bind(&mut tape, false);
        let x = tape.constant(x_encoded.clone().reshaped(vec![1, steps, self.features()])?);
        let z: Vec<f64> = mask.z.iter().map(|&v| f64::from(v)).collect();
        let (logits, probs, attention) = self.classify_encoded(p, &mut tape, &params, x, Some(&z), None)?;
        let lv = tape.value(logits).data();
        let attention_weights = attention
            .map(|a| selected_submatrix(tape.value(a).data(), steps, &mask.selected_indices()))
            .transpose()?;
        Ok(ClassifierOutput {
            prob_positive: tape.value(probs).data()[1],
            logits: [lv[0], lv[1]],
            attention_weights,
            empty_mask: mask.selected() == 0,
        })
    }
}

fn plain_pass(tape: &mut Tape, logits: Var) -> Result<ForwardPass> {
    let class_probs = tape.softmax(logits, 1)?;
    Ok(ForwardPass {
        logits,
        class_probs,
        masks: None,
        mask_probs: None,
        relaxed_mask: None,
        attention: None,
    })
}

/// `[B, 1, T]` pooling weights: uniform over selected timesteps, or over
/// all timesteps when nothing (or no mask) is given.
fn pooling_weights(z: Option<&[f64]>, batch: usize, steps: usize) -> Tensor {
    let mut w = vec![1.0 / steps as f64; batch * steps];
    if let Some(z) = z {
        for (row, zrow) in w.chunks_mut(steps).zip(z.chunks(steps)) {
            let n: f64 = zrow.iter().sum();
            if n > 0.0 {
                for (w, &zi) in row.iter_mut().zip(zrow) {
                    *w = zi / n;
                }
            }
        }
    }
    Tensor::new(vec![batch, 1, steps], w).expect("pooling shape")
}

/// Rows and columns `keep` of a `steps × steps` matrix.
pub(crate) fn selected_submatrix(full: &[f64], steps: usize, keep: &[usize]) -> Result<Tensor> {
    if keep.is_empty() {
        return Tensor::new(vec![steps, steps], full[..steps * steps].to_vec());
    }
    let data = keep
        .iter()
        .flat_map(|&i| keep.iter().map(move |&j| full[i * steps + j]))
        .collect();
    Tensor::new(vec![keep.len(), keep.len()], data)
}

/// Stacks `[T × F]` count matrices into a `[B, T, F]` batch, optionally as
/// `ln(1 + count)`.
pub fn prepare_inputs<'a>(
    matrices: impl IntoIterator<Item = &'a [f64]>,
    steps: usize,
    features: usize,
    log_counts: bool,
) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut batch = 0;
    for m in matrices {
        if m.len() != steps * features {
            return Err(TensorError::InvalidShape {
                shape: vec![steps, features],
                len: m.len(),
            });
        }
        if log_counts {
            data.extend(m.iter().map(|&c| c.max(0.0).ln_1p()));
        } else {
            data.extend_from_slice(m);
        }
        batch += 1;
    }
    Tensor::new(vec![batch, steps, features], data)
}
