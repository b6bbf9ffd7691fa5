//! Dilated residual temporal convolution stages.
//!
//! A stage projects its input to `C` channels with a 1×1 convolution, runs
//! `L` residual layers `H ← ReLU(conv_d(H)) + H` with per-layer dilations
//! taken from a [`DilationSchedule`], and classifies every frame with a
//! 1×1 head followed by a softmax. Stages are stacked so that each one
//! refines the probabilities of the previous stage.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{dim_err, Error, Result};
use crate::numcore::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// `d_l = 2^(l-1)`.
    Exponential,
    /// `1, 2, 3, 5, 8, …`
    Fibonacci,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Exponential => "exponential",
            ScheduleKind::Fibonacci => "fibonacci",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exponential" | "exp" => Ok(ScheduleKind::Exponential),
            "fibonacci" | "fib" => Ok(ScheduleKind::Fibonacci),
            other => Err(Error::Lookup {
                kind: "schedule kind",
                name: other.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DilationSchedule {
    kind: ScheduleKind,
    dilations: Vec<usize>,
}

impl DilationSchedule {
    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn dilations(&self) -> &[usize] {
        &self.dilations
    }

    pub fn layers(&self) -> usize {
        self.dilations.len()
    }
}

pub fn make_schedule(kind: ScheduleKind, layers: usize) -> Result<DilationSchedule> {
    if layers < 1 {
        return Err(Error::Parameter("schedule needs at least one layer".into()));
    }
    let dilations = match kind {
        ScheduleKind::Exponential => (0..layers).map(|l| 1usize << l).collect(),
        ScheduleKind::Fibonacci => {
            let mut d = Vec::with_capacity(layers);
            let (mut a, mut b) = (1usize, 2usize);
            for _ in 0..layers {
                d.push(a);
                let next = a + b;
                a = b;
                b = next;
            }
            d
        }
    };
    Ok(DilationSchedule { kind, dilations })
}

/// `1 + (k − 1) · Σ d_l`.
pub fn receptive_field(schedule: &DilationSchedule, kernel: usize) -> usize {
    1 + (kernel - 1) * schedule.dilations.iter().sum::<usize>()
}

/// Weights of one dilated residual layer: `weight` is `C × C × k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageParams {
    /// `C × W` input projection.
    pub proj_weight: Tensor,
    pub proj_bias: Tensor,
    pub layers: Vec<LayerParams>,
    /// `classes × C` frame classifier.
    pub head_weight: Tensor,
    pub head_bias: Tensor,
    pub dropout: f64,
}

fn uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / libm::sqrt(fan_in as f64);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("init shape")
}

impl StageParams {
    /// Weights uniform in `±1/√fan_in`, zero biases.
    pub fn init<R: Rng + ?Sized>(
        in_width: usize,
        channels: usize,
        classes: usize,
        layers: usize,
        kernel: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Self {
        let proj_weight = uniform(&[channels, in_width], in_width, rng);
        let layers = (0..layers)
            .map(|_| LayerParams {
                weight: uniform(&[channels, channels, kernel], channels * kernel, rng),
                bias: Tensor::zeros(&[channels]),
            })
            .collect();
        let head_weight = uniform(&[classes, channels], channels, rng);
        Self {
            proj_weight,
            proj_bias: Tensor::zeros(&[channels]),
            layers,
            head_weight,
            head_bias: Tensor::zeros(&[classes]),
            dropout,
        }
    }

    pub fn in_width(&self) -> usize {
        self.proj_weight.cols()
    }

    pub fn channels(&self) -> usize {
        self.proj_weight.rows()
    }

    pub fn classes(&self) -> usize {
        self.head_weight.rows()
    }

    pub fn kernel(&self) -> usize {
        self.layers.first().map_or(1, |l| l.weight.shape()[2])
    }

    /// Parameter tensors in declaration order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.proj_weight, &self.proj_bias];
        for l in &self.layers {
            v.push(&l.weight);
            v.push(&l.bias);
        }
        v.push(&self.head_weight);
        v.push(&self.head_bias);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.proj_weight, &mut self.proj_bias];
        for l in &mut self.layers {
            v.push(&mut l.weight);
            v.push(&mut l.bias);
        }
        v.push(&mut self.head_weight);
        v.push(&mut self.head_bias);
        v
    }

    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> StageVars {
        StageVars {
            proj_weight: tape.leaf(self.proj_weight.clone(), requires_grad),
            proj_bias: tape.leaf(self.proj_bias.clone(), requires_grad),
            layers: self
                .layers
                .iter()
                .map(|l| {
                    (
                        tape.leaf(l.weight.clone(), requires_grad),
                        tape.leaf(l.bias.clone(), requires_grad),
                    )
                })
                .collect(),
            head_weight: tape.leaf(self.head_weight.clone(), requires_grad),
            head_bias: tape.leaf(self.head_bias.clone(), requires_grad),
            dropout: self.dropout,
        }
    }
}

/// Tape handles of [`StageParams`].
#[derive(Debug, Clone)]
pub struct StageVars {
    pub proj_weight: Var,
    pub proj_bias: Var,
    pub layers: Vec<(Var, Var)>,
    pub head_weight: Var,
    pub head_bias: Var,
    pub dropout: f64,
}

impl StageVars {
    pub fn all(&self) -> Vec<Var> {
        let mut v = vec![self.proj_weight, self.proj_bias];
        for &(w, b) in &self.layers {
            v.push(w);
            v.push(b);
        }
        v.push(self.head_weight);
        v.push(self.head_bias);
        v
    }
}

/// Independent per-stage weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStageParams {
    pub stages: Vec<StageParams>,
}

impl MultiStageParams {
    /// Stage 1 reads `feature_dim` channels, later stages read `classes`.
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng + ?Sized>(
        stages: usize,
        feature_dim: usize,
        channels: usize,
        classes: usize,
        layers: usize,
        kernel: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Self {
        let stages = (0..stages)
            .map(|s| {
                let w = if s == 0 { feature_dim } else { classes };
                StageParams::init(w, channels, classes, layers, kernel, dropout, rng)
            })
            .collect();
        Self { stages }
    }

    pub fn validate(&self, schedule: &DilationSchedule) -> Result<()> {
        let first = self
            .stages
            .first()
            .ok_or_else(|| Error::Config("no stages".into()))?;
        let classes = first.classes();
        for (i, s) in self.stages.iter().enumerate() {
            if s.layers.len() != schedule.layers() {
                return Err(Error::Config(alloc::format!(
                    "stage {} has {} layers, schedule has {}",
                    i + 1,
                    s.layers.len(),
                    schedule.layers()
                )));
            }
            if s.kernel() % 2 == 0 {
                return Err(Error::Config(alloc::format!(
                    "stage {} kernel is even",
                    i + 1
                )));
            }
            if s.classes() != classes || (i > 0 && s.in_width() != classes) {
                return Err(Error::Config(alloc::format!(
                    "stage {} widths are inconsistent",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Stage outputs on the tape.
#[derive(Debug, Clone, Copy)]
pub struct StageOutput {
    pub logits: Var,
    pub probs: Var,
}

/// Records one stage. Dropout, when given, is inverted dropout applied after
/// each dilated convolution (before the residual add).
pub fn stage_on_tape<R: Rng + ?Sized>(
    tape: &mut Tape,
    input: Var,
    vars: &StageVars,
    schedule: &DilationSchedule,
    mut dropout: Option<&mut R>,
) -> Result<StageOutput> {
    if vars.layers.len() != schedule.layers() {
        return Err(Error::Config(alloc::format!(
            "{} layers but schedule has {}",
            vars.layers.len(),
            schedule.layers()
        )));
    }
    let mut h = tape.linear(input, vars.proj_weight, vars.proj_bias)?;
    for (&(w, b), &d) in vars.layers.iter().zip(schedule.dilations()) {
        let conv = tape.conv1d(h, w, b, d)?;
        let mut act = tape.relu(conv);
        if let Some(rng) = dropout.as_deref_mut() {
            let p = vars.dropout;
            if p > 0.0 {
                let shape = tape.value(act).shape().to_vec();
                let n: usize = shape.iter().product();
                let keep = 1.0 / (1.0 - p);
                let mask: Vec<f64> = (0..n)
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                    .collect();
                let m = tape.constant(Tensor::new(&shape, mask)?);
                act = tape.mul(act, m)?;
            }
        }
        h = tape.add(act, h)?;
    }
    let logits = tape.linear(h, vars.head_weight, vars.head_bias)?;
    let probs = tape.softmax_rows(logits)?;
    Ok(StageOutput { logits, probs })
}

/// Records all stages; stage `s ≥ 2` consumes the probabilities of stage `s − 1`.
pub fn multistage_on_tape<R: Rng + ?Sized>(
    tape: &mut Tape,
    features: Var,
    stages: &[StageVars],
    schedule: &DilationSchedule,
    mut dropout: Option<&mut R>,
) -> Result<Vec<StageOutput>> {
    let mut out: Vec<StageOutput> = Vec::with_capacity(stages.len());
    let mut input = features;
    for vars in stages {
        let o = stage_on_tape(tape, input, vars, schedule, dropout.as_deref_mut())?;
        input = o.probs;
        out.push(o);
    }
    Ok(out)
}

/// Evaluates one stage; returns `(logits, probs)`.
pub fn stage_forward<R: Rng + ?Sized>(
    input: &Tensor,
    params: &StageParams,
    schedule: &DilationSchedule,
    dropout: Option<&mut R>,
) -> Result<(Tensor, Tensor)> {
    if input.shape().len() != 2 || input.cols() != params.in_width() {
        return Err(dim_err!(
            "stage input {:?}, expected width {}",
            input.shape(),
            params.in_width()
        ));
    }
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let vars = params.bind(&mut tape, false);
    let o = stage_on_tape(&mut tape, x, &vars, schedule, dropout)?;
    Ok((tape.value(o.logits).clone(), tape.value(o.probs).clone()))
}

/// Probabilities of every stage, first to last.
pub fn multistage_forward<R: Rng + ?Sized>(
    features: &Tensor,
    params: &MultiStageParams,
    schedule: &DilationSchedule,
    dropout: Option<&mut R>,
) -> Result<Vec<Tensor>> {
    params.validate(schedule)?;
    if features.shape().len() != 2 || features.cols() != params.stages[0].in_width() {
        return Err(dim_err!(
            "features {:?}, expected width {}",
            features.shape(),
            params.stages[0].in_width()
        ));
    }
    let mut tape = Tape::new();
    let x = tape.constant(features.clone());
    let vars: Vec<StageVars> = params
        .stages
        .iter()
        .map(|s| s.bind(&mut tape, false))
        .collect();
    let outs = multistage_on_tape(&mut tape, x, &vars, schedule, dropout)?;
    Ok(outs.iter().map(|o| tape.value(o.probs).clone()).collect())
}

/// Measures the receptive field of a randomly initialized stage by
/// perturbing one input frame and recording which output frames move.
///
/// Returns the span `max − min + 1` of affected output indices.
pub fn probe_receptive_field<R: Rng + ?Sized>(
    schedule: &DilationSchedule,
    kernel: usize,
    channels: usize,
    rng: &mut R,
) -> Result<usize> {
    let analytic = receptive_field(schedule, kernel);
    let t_len = 2 * analytic + 1;
    let width = 2;
    let mut params = StageParams::init(width, channels, 2, schedule.layers(), kernel, 0.0, rng);
    // positive biases keep the ReLUs active so every path carries signal
    for l in &mut params.layers {
        l.bias = Tensor::full(&[channels], 0.5);
    }
    let data: Vec<f64> = (0..t_len * width)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let x = Tensor::new(&[t_len, width], data)?;
    let center = t_len / 2;
    let mut x2 = x.clone();
    x2.data_mut()[center * width] += 1.0;
    let none: Option<&mut R> = None;
    let (base, _) = stage_forward(&x, &params, schedule, none)?;
    let none: Option<&mut R> = None;
    let (moved, _) = stage_forward(&x2, &params, schedule, none)?;
    let changed: Vec<usize> = (0..t_len)
        .filter(|&t| base.row(t).iter().zip(moved.row(t)).any(|(a, b)| a != b))
        .collect();
    Ok(match (changed.first(), changed.last()) {
        (Some(lo), Some(hi)) => hi - lo + 1,
        _ => 0,
    })
}
