//! The nine detectors: two heuristics, three flat regressors and four
//! convolutional encoder/decoders, with training and inference.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use gazefollow_tensor::{
    adam_step, grad_check, AdamConfig, AdamState, Checkpoint, GradCheckConfig, GradCheckReport, Graph, Tensor, TensorError, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{GridCell, GridConfig, HeatMap};
use crate::peaks::{extract_peaks, PeakConfig};
use crate::render::{frame_maps, mean_of, object_heatmap, Frame, GazeSequence};
use crate::simgen::{generate_indexed, GenConfig, Scenario, ScenarioMix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    Cone,
    Intersect,
    LinearReg,
    Fc1,
    Fc3,
    Mean2DEnc,
    Enc2D,
    Enc3D,
    UNet3D2D,
}

impl ModelKind {
    pub const ALL: [ModelKind; 9] = [
        ModelKind::Cone,
        ModelKind::Intersect,
        ModelKind::LinearReg,
        ModelKind::Fc1,
        ModelKind::Fc3,
        ModelKind::Mean2DEnc,
        ModelKind::Enc2D,
        ModelKind::Enc3D,
        ModelKind::UNet3D2D,
    ];

    /// Every kind with trainable parameters.
    pub const LEARNED: [ModelKind; 7] = [
        ModelKind::LinearReg,
        ModelKind::Fc1,
        ModelKind::Fc3,
        ModelKind::Mean2DEnc,
        ModelKind::Enc2D,
        ModelKind::Enc3D,
        ModelKind::UNet3D2D,
    ];

    /// Identifier used on the command line and in files.
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cone => "cone",
            ModelKind::Intersect => "intersect",
            ModelKind::LinearReg => "linear-reg",
            ModelKind::Fc1 => "fc1",
            ModelKind::Fc3 => "fc3",
            ModelKind::Mean2DEnc => "mean-2d-enc",
            ModelKind::Enc2D => "2d-enc",
            ModelKind::Enc3D => "3d-enc",
            ModelKind::UNet3D2D => "unet-3d2d",
        }
    }

    /// Human-readable label for tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Cone => "Cone",
            ModelKind::Intersect => "Intersect",
            ModelKind::LinearReg => "Linear Reg.",
            ModelKind::Fc1 => "1-FC",
            ModelKind::Fc3 => "3-FC",
            ModelKind::Mean2DEnc => "Mean-2D-Enc",
            ModelKind::Enc2D => "2D-Enc",
            ModelKind::Enc3D => "3D-Enc",
            ModelKind::UNet3D2D => "3D/2D U-Net",
        }
    }

    pub fn is_heuristic(self) -> bool {
        matches!(self, ModelKind::Cone | ModelKind::Intersect)
    }

    /// Consumes the whole sequence rather than its time average.
    pub fn uses_sequence(self) -> bool {
        matches!(self, ModelKind::Enc2D | ModelKind::Enc3D | ModelKind::UNet3D2D)
    }

    pub fn is_encoder_decoder(self) -> bool {
        matches!(self, ModelKind::Mean2DEnc | ModelKind::Enc2D | ModelKind::Enc3D | ModelKind::UNet3D2D)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| {
                let names: Vec<&str> = ModelKind::ALL.iter().map(|k| k.name()).collect();
                invalid(format!("unknown model '{s}', expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub s_u: usize,
    pub s_v: usize,
    /// Sequence length `T` the model is built for.
    pub horizon: usize,
    /// Encoder widths; the decoder mirrors them.
    pub channels: [usize; 3],
    pub seed: u64,
    /// U-Net only: when false the skip tensors are multiplied by zero.
    pub skips: bool,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, grid: &GridConfig, horizon: usize, seed: u64) -> Self {
        Self {
            kind,
            s_u: grid.s_u,
            s_v: grid.s_v,
            horizon,
            channels: [16, 32, 64],
            seed,
            skips: true,
        }
    }

    pub fn cells(&self) -> usize {
        self.s_u * self.s_v
    }

    pub fn validate(&self) -> Result<()> {
        if self.s_u < 2 || self.s_v < 2 || self.horizon == 0 {
            return Err(invalid(format!(
                "model needs a grid of at least 2×2 and T ≥ 1, got {}×{}, T={}",
                self.s_u, self.s_v, self.horizon
            )));
        }
        if self.kind.is_encoder_decoder() {
            if !self.s_u.is_multiple_of(8) || !self.s_v.is_multiple_of(8) {
                return Err(invalid(format!(
                    "encoder/decoder models need grid sides divisible by 8, got {}×{}",
                    self.s_u, self.s_v
                )));
            }
            if self.channels.contains(&0) {
                return Err(invalid("channel widths must be positive"));
            }
        }
        Ok(())
    }

    fn check_grid(&self, g: &GridConfig) -> Result<()> {
        if g.s_u != self.s_u || g.s_v != self.s_v {
            return Err(invalid(format!(
                "model expects a {}×{} grid, input is {}×{}",
                self.s_u, self.s_v, g.s_u, g.s_v
            )));
        }
        Ok(())
    }
}

/// One observed sequence in the forms the detectors consume.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceInput {
    pub gaze: GazeSequence,
    /// `Γ`, time average of `gaze`.
    pub mean_gaze: HeatMap,
    /// `Γ^inter`, time average of the intersection maps.
    pub mean_intersection: HeatMap,
}

impl SequenceInput {
    pub fn from_frames(frames: &[Frame], cfg: &GridConfig, epsilon: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(invalid("a sequence needs at least one frame"));
        }
        let (gaze, inter): (Vec<HeatMap>, Vec<HeatMap>) = frames.iter().map(|f| frame_maps(f, cfg, epsilon)).unzip();
        let mean_gaze = mean_of(cfg, gaze.iter());
        let mean_intersection = mean_of(cfg, inter.iter());
        Ok(Self {
            gaze: GazeSequence::new(cfg, gaze)?,
            mean_gaze,
            mean_intersection,
        })
    }

    pub fn config(&self) -> &GridConfig {
        self.gaze.config()
    }

    pub fn horizon(&self) -> usize {
        self.gaze.len()
    }
}

/// An input sequence with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: SequenceInput,
    pub objects: Vec<GridCell>,
    /// Ground-truth `Ω`.
    pub omega: HeatMap,
}

impl Sample {
    pub fn from_scenario(s: &Scenario, epsilon: f64, sigma_omega: f64) -> Result<Self> {
        Ok(Self {
            input: SequenceInput::from_frames(&s.frames, &s.grid, epsilon)?,
            objects: s.objects.clone(),
            omega: object_heatmap(&s.objects, &s.grid, sigma_omega)?,
        })
    }
}

/// Indexed supply of training samples.
pub trait DataSource {
    fn sample(&mut self, index: u64) -> Result<Sample>;
}

/// Fresh synthetic scenarios generated on demand; item `i` is always the same.
#[derive(Clone, Debug)]
pub struct SyntheticSource {
    pub gen: GenConfig,
    pub mix: ScenarioMix,
    pub epsilon: f64,
    pub sigma_omega: f64,
}

impl DataSource for SyntheticSource {
    fn sample(&mut self, index: u64) -> Result<Sample> {
        let s = generate_indexed(&self.gen, &self.mix, index)?;
        Sample::from_scenario(&s, self.epsilon, self.sigma_omega)
    }
}

/// A frozen list of samples, cycled in order.
#[derive(Clone, Debug)]
pub struct FixedSource {
    pub samples: Vec<Sample>,
}

impl DataSource for FixedSource {
    fn sample(&mut self, index: u64) -> Result<Sample> {
        if self.samples.is_empty() {
            return Err(invalid("fixed data source is empty"));
        }
        Ok(self.samples[(index % self.samples.len() as u64) as usize].clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    /// Parameters in declaration order.
    pub params: Vec<(String, Tensor)>,
    /// Training loss after every step.
    pub log: Vec<f64>,
}

/// Initial sigmoid-output bias: `logit(0.02)`, close to the mean of `Ω`.
const OUTPUT_BIAS_INIT: f64 = -3.891_820_298_110_627;

struct Init {
    rng: ChaCha8Rng,
    params: Vec<(String, Tensor)>,
}

impl Init {
    /// Uniform in `±sqrt(gain / fan_in)`.
    fn weight(&mut self, name: &str, shape: &[usize], fan_in: usize, gain: f64) {
        let bound = (gain / fan_in as f64).sqrt();
        let rng = &mut self.rng;
        let t = Tensor::from_fn(shape, |_| rng.random_range(-bound..bound));
        self.params.push((name.to_string(), t));
    }

    fn bias(&mut self, name: &str, len: usize, value: f64) {
        self.params.push((name.to_string(), Tensor::full(&[len], value)));
    }
}

/// He-uniform gain for layers followed by a ReLU, LeCun-uniform otherwise.
const RELU_GAIN: f64 = 6.0;
const LINEAR_GAIN: f64 = 3.0;

/// Initialises the parameters of `spec` from `spec.seed`.
pub fn build(spec: &ModelSpec) -> Result<TrainedModel> {
    spec.validate()?;
    let mut init = Init {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        params: Vec::new(),
    };
    let s = spec.cells();
    let [c1, c2, c3] = spec.channels;
    match spec.kind {
        ModelKind::Cone | ModelKind::Intersect => {}
        ModelKind::LinearReg => {
            init.weight("out.w", &[s, s], s, LINEAR_GAIN);
            init.bias("out.b", s, 0.0);
        }
        ModelKind::Fc1 | ModelKind::Fc3 => {
            let depth = if spec.kind == ModelKind::Fc1 { 1 } else { 3 };
            for d in 1..=depth {
                init.weight(&format!("h{d}.w"), &[s, s], s, RELU_GAIN);
                init.bias(&format!("h{d}.b"), s, 0.0);
            }
            init.weight("out.w", &[s, s], s, LINEAR_GAIN);
            init.bias("out.b", s, OUTPUT_BIAS_INIT);
        }
        kind => {
            let three_d = matches!(kind, ModelKind::Enc3D | ModelKind::UNet3D2D);
            let c_in = if kind == ModelKind::Enc2D { spec.horizon } else { 1 };
            let k: &[usize] = if three_d { &[3, 3, 3] } else { &[3, 3] };
            let kvol: usize = k.iter().product();
            for (i, (cin, cout)) in [(c_in, c1), (c1, c2), (c2, c3)].into_iter().enumerate() {
                let shape: Vec<usize> = [cout, cin].iter().chain(k).copied().collect();
                init.weight(&format!("enc{}.w", i + 1), &shape, cin * kvol, RELU_GAIN);
                init.bias(&format!("enc{}.b", i + 1), cout, 0.0);
            }
            let unet = kind == ModelKind::UNet3D2D;
            let skip = |c: usize| if unet { c } else { 0 };
            let dec = [(c3 + skip(c3), c2), (c2 + skip(c2), c1), (c1 + skip(c1), 1)];
            for (i, (cin, cout)) in dec.into_iter().enumerate() {
                let gain = if i == 2 { LINEAR_GAIN } else { RELU_GAIN };
                init.weight(&format!("dec{}.w", i + 1), &[cout, cin, 3, 3], cin * 9, gain);
                let b = if i == 2 { OUTPUT_BIAS_INIT } else { 0.0 };
                init.bias(&format!("dec{}.b", i + 1), cout, b);
            }
        }
    }
    Ok(TrainedModel {
        spec: spec.clone(),
        params: init.params,
        log: Vec::new(),
    })
}

/// Packs a batch into the input tensor of `spec`:
/// `[B, S]` for flat models, `[B, 1, H, W]` for Mean-2D-Enc, `[B, T, H, W]`
/// for 2D-Enc and `[B, 1, T, H, W]` for the 3D encoders.
pub fn input_tensor(spec: &ModelSpec, inputs: &[&SequenceInput]) -> Result<Tensor> {
    if inputs.is_empty() {
        return Err(invalid("empty batch"));
    }
    let (h, w, s) = (spec.s_u, spec.s_v, spec.cells());
    let b = inputs.len();
    let mut data = Vec::with_capacity(b * s * if spec.kind.uses_sequence() { spec.horizon } else { 1 });
    for x in inputs {
        spec.check_grid(x.config())?;
        if spec.kind.uses_sequence() {
            if x.horizon() != spec.horizon {
                return Err(invalid(format!(
                    "model expects T={}, sequence has {} frames",
                    spec.horizon,
                    x.horizon()
                )));
            }
            for m in x.gaze.maps() {
                data.extend_from_slice(m.values());
            }
        } else {
            data.extend_from_slice(x.mean_gaze.values());
        }
    }
    let shape: Vec<usize> = match spec.kind {
        ModelKind::Mean2DEnc => vec![b, 1, h, w],
        ModelKind::Enc2D => vec![b, spec.horizon, h, w],
        ModelKind::Enc3D | ModelKind::UNet3D2D => vec![b, 1, spec.horizon, h, w],
        _ => vec![b, s],
    };
    Ok(Tensor::new(&shape, data)?)
}

/// Ground-truth tensor `[B, S]`.
pub fn target_tensor(spec: &ModelSpec, omegas: &[&HeatMap]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(omegas.len() * spec.cells());
    for o in omegas {
        spec.check_grid(o.config())?;
        data.extend_from_slice(o.values());
    }
    Ok(Tensor::new(&[omegas.len(), spec.cells()], data)?)
}

/// Records the forward pass of `spec` and returns the output `[B, S]`:
/// raw for Linear Reg., post-sigmoid for every other model.
pub fn forward(spec: &ModelSpec, g: &mut Graph, params: &[Var], x: Var) -> Result<Var> {
    let mut p = params.iter().copied();
    let mut next = || p.next().ok_or_else(|| invalid("parameter list too short"));
    let b = g.value(x).shape()[0];
    let s = spec.cells();
    match spec.kind {
        ModelKind::Cone | ModelKind::Intersect => Err(invalid(format!("{} has no forward pass", spec.kind))),
        ModelKind::LinearReg => {
            let (w, bias) = (next()?, next()?);
            Ok(g.dense(x, w, bias)?)
        }
        ModelKind::Fc1 | ModelKind::Fc3 => {
            let depth = if spec.kind == ModelKind::Fc1 { 1 } else { 3 };
            let mut h = x;
            for _ in 0..depth {
                let (w, bias) = (next()?, next()?);
                let z = g.dense(h, w, bias)?;
                h = g.relu(z);
            }
            let (w, bias) = (next()?, next()?);
            let z = g.dense(h, w, bias)?;
            Ok(g.sigmoid(z))
        }
        kind => {
            let three_d = matches!(kind, ModelKind::Enc3D | ModelKind::UNet3D2D);
            let mut h = x;
            let mut skips = Vec::with_capacity(3);
            for _ in 0..3 {
                let (w, bias) = (next()?, next()?);
                let z = if three_d { g.conv3d(h, w, Some(bias))? } else { g.conv2d(h, w, Some(bias))? };
                let a = g.relu(z);
                if kind == ModelKind::UNet3D2D {
                    let squeezed = g.temporal_max(a)?;
                    skips.push(if spec.skips { squeezed } else { g.scale(squeezed, 0.0) });
                }
                h = if three_d { g.maxpool3d(a, (2, 2, 2))? } else { g.maxpool2d(a, 2)? };
            }
            if three_d {
                h = g.temporal_max(h)?;
            }
            for i in 0..3 {
                let (w, bias) = (next()?, next()?);
                h = g.upsample2d(h, 2)?;
                if let Some(&skip) = skips.get(2 - i) {
                    h = g.concat_channels(h, skip)?;
                }
                let z = g.conv2d(h, w, Some(bias))?;
                h = if i == 2 { g.sigmoid(z) } else { g.relu(z) };
            }
            Ok(g.reshape(h, &[b, s])?)
        }
    }
}

fn check_params(m: &TrainedModel) -> Result<()> {
    let fresh = build(&m.spec)?;
    if fresh.params.len() != m.params.len()
        || fresh.params.iter().zip(&m.params).any(|((na, a), (nb, b))| na != nb || a.shape() != b.shape())
    {
        return Err(invalid(format!("parameters do not match a {} model", m.spec.kind)));
    }
    Ok(())
}

/// Mean-squared-error loss and parameter gradients on one batch.
pub fn loss_and_gradients(model: &TrainedModel, batch: &[&Sample]) -> Result<(f64, Vec<Tensor>)> {
    let spec = &model.spec;
    let inputs: Vec<&SequenceInput> = batch.iter().map(|s| &s.input).collect();
    let omegas: Vec<&HeatMap> = batch.iter().map(|s| &s.omega).collect();
    let mut g = Graph::new();
    let x = g.input(input_tensor(spec, &inputs)?);
    let y = g.input(target_tensor(spec, &omegas)?);
    let vars: Vec<Var> = model.params.iter().map(|(_, t)| g.param(t.clone())).collect();
    let out = forward(spec, &mut g, &vars, x)?;
    let loss = g.mse_loss(out, y)?;
    let value = g.value(loss).data()[0];
    let mut grads = g.backward(loss)?;
    let tensors = vars
        .iter()
        .zip(&model.params)
        .map(|(&v, (_, p))| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    Ok((value, tensors))
}

/// Finite-difference check of [`loss_and_gradients`] with respect to every
/// parameter tensor.
pub fn gradient_check(model: &TrainedModel, batch: &[&Sample], cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let spec = &model.spec;
    let inputs: Vec<&SequenceInput> = batch.iter().map(|s| &s.input).collect();
    let omegas: Vec<&HeatMap> = batch.iter().map(|s| &s.omega).collect();
    let x = input_tensor(spec, &inputs)?;
    let y = target_tensor(spec, &omegas)?;
    let params: Vec<Tensor> = model.params.iter().map(|(_, t)| t.clone()).collect();
    let report = grad_check(
        &params,
        |g, vars| {
            let xv = g.input(x.clone());
            let yv = g.input(y.clone());
            let out = forward(spec, g, vars, xv).map_err(|e| match e {
                Error::Tensor(t) => t,
                other => TensorError::ShapeMismatch { op: "forward", detail: other.to_string() },
            })?;
            g.mse_loss(out, yv)
        },
        cfg,
    )?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            steps: 200,
            batch_size: 32,
            learning_rate: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.eps,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.epsilon,
        }
    }
}

/// Trains a freshly built `spec` with Adam on the MSE loss. Step `k` uses
/// samples `k·B .. (k+1)·B` of `data`.
pub fn train(spec: &ModelSpec, data: &mut dyn DataSource, cfg: &TrainConfig) -> Result<TrainedModel> {
    train_with_progress(spec, data, cfg, |_, _| {})
}

/// As [`train`], calling `progress(step, loss)` after every step.
pub fn train_with_progress(
    spec: &ModelSpec,
    data: &mut dyn DataSource,
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainedModel> {
    if spec.kind.is_heuristic() {
        return Err(invalid(format!("{} has nothing to train", spec.kind)));
    }
    if cfg.steps == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("steps and batch_size must be positive".into()));
    }
    let mut model = build(spec)?;
    let adam = cfg.adam();
    let mut state = AdamState::new();
    let b = cfg.batch_size as u64;
    for step in 0..cfg.steps {
        let batch: Vec<Sample> = (0..b).map(|i| data.sample(step as u64 * b + i)).collect::<Result<_>>()?;
        let refs: Vec<&Sample> = batch.iter().collect();
        let (loss, grads) = loss_and_gradients(&model, &refs)?;
        if !loss.is_finite() || grads.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFiniteLoss { step, loss });
        }
        let grad_refs: Vec<&Tensor> = grads.iter().collect();
        let mut params: Vec<Tensor> = model.params.iter_mut().map(|(_, t)| std::mem::replace(t, Tensor::scalar(0.0))).collect();
        let res = adam_step(&mut params, &grad_refs, &mut state, &adam);
        for ((_, slot), t) in model.params.iter_mut().zip(params) {
            *slot = t;
        }
        res?;
        model.log.push(loss);
        progress(step, loss);
    }
    Ok(model)
}

/// Predictions `Ω̂` for a batch of inputs, values in `[0, 1]`.
pub fn predict_batch(model: &TrainedModel, inputs: &[&SequenceInput]) -> Result<Vec<HeatMap>> {
    let spec = &model.spec;
    if spec.kind.is_heuristic() {
        return Ok(inputs
            .iter()
            .map(|x| match spec.kind {
                ModelKind::Cone => x.mean_gaze.clone(),
                _ => x.mean_intersection.clone(),
            })
            .collect());
    }
    check_params(model)?;
    let mut g = Graph::new();
    let x = g.input(input_tensor(spec, inputs)?);
    let vars: Vec<Var> = model.params.iter().map(|(_, t)| g.input(t.clone())).collect();
    let out = forward(spec, &mut g, &vars, x)?;
    let cfg = *inputs[0].config();
    g.value(out)
        .data()
        .chunks_exact(spec.cells())
        .map(|row| {
            let raw = HeatMap::new(&cfg, row.to_vec())?;
            Ok(if spec.kind == ModelKind::LinearReg {
                raw.min_max_rescaled()
            } else {
                HeatMap::normalized(&cfg, raw.into_values())?
            })
        })
        .collect()
}

pub fn predict(model: &TrainedModel, input: &SequenceInput) -> Result<HeatMap> {
    Ok(predict_batch(model, &[input])?.remove(0))
}

/// Object cells: peaks of `Ω̂`, or of `Γ` / `Γ^inter` for the heuristics.
pub fn detect(model: &TrainedModel, input: &SequenceInput, pc: &PeakConfig) -> Result<Vec<GridCell>> {
    Ok(extract_peaks(&predict(model, input)?, pc))
}

/// A heuristic needs no parameters; this wraps it in the common model type.
pub fn heuristic(kind: ModelKind, grid: &GridConfig, horizon: usize) -> Result<TrainedModel> {
    if !kind.is_heuristic() {
        return Err(invalid(format!("{kind} is not a heuristic")));
    }
    build(&ModelSpec::new(kind, grid, horizon, 0))
}

const CHECKPOINT_META: &str = "__meta";

impl TrainedModel {
    /// Checkpoint holding a `__meta` tensor
    /// `[s_u, s_v, T, c1, c2, c3, skips, seed_hi, seed_lo]` followed by the
    /// parameters in declaration order. The container name is the model kind.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let s = &self.spec;
        let mut ck = Checkpoint::new(s.kind.name());
        let meta = vec![
            s.s_u as f64,
            s.s_v as f64,
            s.horizon as f64,
            s.channels[0] as f64,
            s.channels[1] as f64,
            s.channels[2] as f64,
            if s.skips { 1.0 } else { 0.0 },
            (s.seed >> 32) as f64,
            (s.seed & 0xFFFF_FFFF) as f64,
        ];
        ck.push(CHECKPOINT_META, Tensor::new(&[meta.len()], meta).expect("non-empty meta"));
        for (name, t) in &self.params {
            ck.push(name.clone(), t.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let kind: ModelKind = ck.name.parse()?;
        let meta = ck
            .get(CHECKPOINT_META)
            .filter(|t| t.len() == 9)
            .ok_or_else(|| invalid("checkpoint lacks model metadata"))?
            .data();
        let as_usize = |v: f64| v as usize;
        let spec = ModelSpec {
            kind,
            s_u: as_usize(meta[0]),
            s_v: as_usize(meta[1]),
            horizon: as_usize(meta[2]),
            channels: [as_usize(meta[3]), as_usize(meta[4]), as_usize(meta[5])],
            skips: meta[6] != 0.0,
            seed: ((meta[7] as u64) << 32) | meta[8] as u64,
        };
        let params = ck.tensors.iter().filter(|(n, _)| n != CHECKPOINT_META).cloned().collect();
        let model = TrainedModel { spec, params, log: Vec::new() };
        check_params(&model)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::{PersonState, DEFAULT_EPSILON};
    use crate::grid::WorldPoint;

    fn small_grid() -> GridConfig {
        GridConfig::square(16, 3.0).unwrap()
    }

    fn toy_input(cfg: &GridConfig, t: usize, seed: u64) -> SequenceInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames: Vec<Frame> = (0..t)
            .map(|_| {
                Frame::new(
                    (0..2)
                        .map(|_| {
                            PersonState::new(
                                WorldPoint::new(rng.random_range(0.5..2.5), rng.random_range(0.5..2.5)),
                                rng.random_range(-3.0..3.0),
                            )
                        })
                        .collect(),
                )
            })
            .collect();
        SequenceInput::from_frames(&frames, cfg, 10f64.to_radians()).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert_eq!("UNET_3D2D".parse::<ModelKind>().unwrap(), ModelKind::UNet3D2D);
        assert!("resnet".parse::<ModelKind>().is_err());
    }

    #[test]
    fn parameter_shapes() {
        let g = GridConfig::default();
        let lin = build(&ModelSpec::new(ModelKind::LinearReg, &g, 20, 0)).unwrap();
        assert_eq!(lin.params[0].1.shape(), &[1024, 1024]);
        assert_eq!(lin.params[1].1.shape(), &[1024]);
        let fc3 = build(&ModelSpec::new(ModelKind::Fc3, &g, 20, 0)).unwrap();
        let names: Vec<&str> = fc3.params.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["h1.w", "h1.b", "h2.w", "h2.b", "h3.w", "h3.b", "out.w", "out.b"]);
        assert!(fc3.params.iter().step_by(2).all(|(_, t)| t.shape() == [1024, 1024]));
        let unet = build(&ModelSpec::new(ModelKind::UNet3D2D, &g, 20, 0)).unwrap();
        assert_eq!(unet.params[0].1.shape(), &[16, 1, 3, 3, 3]);
        assert_eq!(unet.params[6].1.shape(), &[32, 128, 3, 3]);
        let enc2 = build(&ModelSpec::new(ModelKind::Enc2D, &g, 20, 0)).unwrap();
        assert_eq!(enc2.params[0].1.shape(), &[16, 20, 3, 3]);
    }

    #[test]
    fn build_is_deterministic_and_validated() {
        let g = GridConfig::default();
        let spec = ModelSpec::new(ModelKind::Mean2DEnc, &g, 20, 5);
        assert_eq!(build(&spec).unwrap(), build(&spec).unwrap());
        assert_ne!(build(&spec).unwrap(), build(&ModelSpec { seed: 6, ..spec.clone() }).unwrap());
        let odd = GridConfig::square(20, 3.0).unwrap();
        assert!(build(&ModelSpec::new(ModelKind::Enc3D, &odd, 4, 0)).is_err());
        assert!(build(&ModelSpec::new(ModelKind::Fc1, &odd, 4, 0)).is_ok());
    }

    #[test]
    fn zero_linear_model_predicts_zeros() {
        let g = small_grid();
        let mut m = build(&ModelSpec::new(ModelKind::LinearReg, &g, 3, 0)).unwrap();
        for (_, t) in &mut m.params {
            t.data_mut().fill(0.0);
        }
        let out = predict(&m, &toy_input(&g, 3, 1)).unwrap();
        assert_eq!(out.max(), 0.0);
        assert!(out.is_normalized());
    }

    #[test]
    fn sigmoid_models_stay_in_open_unit_interval() {
        let g = small_grid();
        for kind in [ModelKind::Fc1, ModelKind::Mean2DEnc, ModelKind::Enc2D, ModelKind::Enc3D, ModelKind::UNet3D2D] {
            let m = build(&ModelSpec::new(kind, &g, 4, 1)).unwrap();
            let out = predict(&m, &toy_input(&g, 4, 2)).unwrap();
            assert_eq!(out.config().s_u, 16);
            assert!(out.values().iter().all(|&v| v > 0.0 && v < 1.0), "{kind}");
        }
    }

    #[test]
    fn wrong_horizon_is_rejected() {
        let g = small_grid();
        let m = build(&ModelSpec::new(ModelKind::Enc3D, &g, 4, 1)).unwrap();
        assert!(predict(&m, &toy_input(&g, 5, 2)).is_err());
        let flat = build(&ModelSpec::new(ModelKind::Fc1, &g, 4, 1)).unwrap();
        assert!(predict(&flat, &toy_input(&g, 5, 2)).is_ok());
        let big = build(&ModelSpec::new(ModelKind::Fc1, &GridConfig::default(), 4, 1)).unwrap();
        assert!(predict(&big, &toy_input(&g, 4, 2)).is_err());
    }

    #[test]
    fn heuristics_bypass_prediction() {
        let g = small_grid();
        let x = toy_input(&g, 4, 3);
        let cone = heuristic(ModelKind::Cone, &g, 4).unwrap();
        assert_eq!(predict(&cone, &x).unwrap(), x.mean_gaze);
        let inter = heuristic(ModelKind::Intersect, &g, 4).unwrap();
        assert_eq!(predict(&inter, &x).unwrap(), x.mean_intersection);
        assert!(heuristic(ModelKind::Fc1, &g, 4).is_err());
        let mut src = FixedSource { samples: vec![] };
        assert!(train(&cone.spec, &mut src, &TrainConfig::default()).is_err());
    }

    #[test]
    fn identical_batch_matches_single_sample_gradient() {
        let g = small_grid();
        let m = build(&ModelSpec::new(ModelKind::Mean2DEnc, &g, 3, 4)).unwrap();
        let x = toy_input(&g, 3, 9);
        let sample = Sample {
            omega: object_heatmap(&[GridCell::new(2, 14)], &g, 1.5).unwrap(),
            objects: vec![GridCell::new(2, 14)],
            input: x,
        };
        let (l1, g1) = loss_and_gradients(&m, &[&sample]).unwrap();
        let (l4, g4) = loss_and_gradients(&m, &[&sample; 4]).unwrap();
        assert!((l1 - l4).abs() < 1e-14);
        for (a, b) in g1.iter().zip(&g4) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn unet_gradients_match_finite_differences() {
        let grid = small_grid();
        let mut model = build(&ModelSpec::new(ModelKind::UNet3D2D, &grid, 4, 3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (_, p) in &mut model.params {
            p.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.05));
        }
        let sample = Sample {
            input: toy_input(&grid, 4, 2),
            objects: vec![GridCell::new(3, 12)],
            omega: object_heatmap(&[GridCell::new(3, 12)], &grid, 1.5).unwrap(),
        };
        let cfg = GradCheckConfig { max_coords: Some(4), ..GradCheckConfig::default() };
        let report = gradient_check(&model, &[&sample], &cfg).unwrap();
        assert!(report.passes(1e-4), "{report:?}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let g = small_grid();
        let spec = ModelSpec { seed: u64::MAX - 3, skips: false, ..ModelSpec::new(ModelKind::UNet3D2D, &g, 4, 0) };
        let m = build(&spec).unwrap();
        let back = TrainedModel::from_checkpoint(&m.to_checkpoint()).unwrap();
        assert_eq!(back.spec, m.spec);
        assert_eq!(back.params, m.params);
        let mut ck = m.to_checkpoint();
        ck.name = "fc1".into();
        assert!(TrainedModel::from_checkpoint(&ck).is_err());
    }

    #[test]
    fn skips_change_the_output() {
        let g = small_grid();
        let spec = ModelSpec::new(ModelKind::UNet3D2D, &g, 4, 7);
        let live = build(&spec).unwrap();
        let dead = TrainedModel { spec: ModelSpec { skips: false, ..spec }, ..live.clone() };
        let x = toy_input(&g, 4, 5);
        let (a, b) = (predict(&live, &x).unwrap(), predict(&dead, &x).unwrap());
        assert_eq!(a.values().len(), b.values().len());
        assert!(a.values().iter().zip(b.values()).any(|(p, q)| (p - q).abs() > 1e-9));
    }

    #[test]
    fn default_epsilon_renders_inputs() {
        let g = GridConfig::default();
        let f = Frame::new(vec![PersonState::new(WorldPoint::new(1.0, 1.0), 0.2)]);
        let x = SequenceInput::from_frames(&[f.clone(), f], &g, DEFAULT_EPSILON).unwrap();
        assert!(x.mean_gaze.max() == 1.0);
        assert_eq!(x.mean_intersection.max(), 0.0);
    }
}
