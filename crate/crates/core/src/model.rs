//! The full segmentation model: attention fusion feeding a multi-stage TCN.

use alloc::vec::Vec;
use rand::Rng;

use crate::error::{dim_err, Error, Result};
use crate::fusion::{fuse_on_tape, FusionParams, FusionVars};
use crate::numcore::{Tape, Tensor, Var};
use crate::tcn::{
    make_schedule, multistage_on_tape, DilationSchedule, MultiStageParams, ScheduleKind, StageVars,
};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Per-modality feature width `D`.
    pub feature_dim: usize,
    pub classes: usize,
    /// Hidden channels `C`.
    pub channels: usize,
    /// Layers per stage `L`.
    pub layers: usize,
    pub kernel: usize,
    pub stages: usize,
    pub schedule: ScheduleKind,
    pub dropout: f64,
}

impl ModelConfig {
    /// S=4, L=10, k=3, C=64, Fibonacci dilations, dropout 0.5.
    pub fn standard(feature_dim: usize, classes: usize) -> Self {
        Self {
            feature_dim,
            classes,
            channels: 64,
            layers: 10,
            kernel: 3,
            stages: 4,
            schedule: ScheduleKind::Fibonacci,
            dropout: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feature_dim", self.feature_dim),
            ("classes", self.classes),
            ("channels", self.channels),
            ("layers", self.layers),
            ("kernel", self.kernel),
            ("stages", self.stages),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(alloc::format!("{} must be positive", name)));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(alloc::format!(
                "kernel {} must be odd",
                self.kernel
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(alloc::format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn schedule(&self) -> DilationSchedule {
        make_schedule(self.schedule, self.layers).expect("validated layer count")
    }
}

/// All learnable weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub fusion: FusionParams,
    pub stages: MultiStageParams,
}

/// Tape handles of [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub fusion: FusionVars,
    pub stages: Vec<StageVars>,
}

impl ModelVars {
    /// Handles in declaration order, matching [`ModelParams::tensors`].
    pub fn all(&self) -> Vec<Var> {
        let mut v = alloc::vec![self.fusion.weight, self.fusion.bias];
        for s in &self.stages {
            v.extend(s.all());
        }
        v
    }
}

/// Per-stage outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub alpha: Var,
    pub fused: Var,
    pub stage_probs: Vec<Var>,
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let fusion = FusionParams::init(config.feature_dim, rng);
        let stages = MultiStageParams::init(
            config.stages,
            config.feature_dim,
            config.channels,
            config.classes,
            config.layers,
            config.kernel,
            config.dropout,
            rng,
        );
        Ok(Self {
            config,
            fusion,
            stages,
        })
    }

    /// Parameter tensors in declaration order: fusion weight and bias, then
    /// per stage the projection, every layer's weight and bias, and the head.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = alloc::vec![&self.fusion.weight, &self.fusion.bias];
        for s in &self.stages.stages {
            v.extend(s.tensors());
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = alloc::vec![&mut self.fusion.weight, &mut self.fusion.bias];
        for s in &mut self.stages.stages {
            v.extend(s.tensors_mut());
        }
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Shapes of [`ModelParams::tensors`] implied by `config`.
    pub fn expected_shapes(config: &ModelConfig) -> Vec<Vec<usize>> {
        let (d, c, n, k) = (
            config.feature_dim,
            config.channels,
            config.classes,
            config.kernel,
        );
        let mut shapes = alloc::vec![alloc::vec![d, 2 * d], alloc::vec![d]];
        for s in 0..config.stages {
            let w = if s == 0 { d } else { n };
            shapes.push(alloc::vec![c, w]);
            shapes.push(alloc::vec![c]);
            for _ in 0..config.layers {
                shapes.push(alloc::vec![c, c, k]);
                shapes.push(alloc::vec![c]);
            }
            shapes.push(alloc::vec![n, c]);
            shapes.push(alloc::vec![n]);
        }
        shapes
    }

    /// Rebuilds parameters from declaration-ordered flat blocks.
    pub fn from_blocks(config: ModelConfig, blocks: Vec<Vec<f64>>) -> Result<Self> {
        config.validate()?;
        let shapes = Self::expected_shapes(&config);
        if shapes.len() != blocks.len() {
            return Err(dim_err!(
                "expected {} parameter blocks, got {}",
                shapes.len(),
                blocks.len()
            ));
        }
        let mut tensors = shapes
            .iter()
            .zip(blocks)
            .map(|(s, b)| Tensor::new(s, b))
            .collect::<Result<Vec<_>>>()?
            .into_iter();
        let mut next = || tensors.next().expect("block count checked");
        let fusion = FusionParams {
            weight: next(),
            bias: next(),
        };
        let mut stages = Vec::with_capacity(config.stages);
        for _ in 0..config.stages {
            let proj_weight = next();
            let proj_bias = next();
            let layers = (0..config.layers)
                .map(|_| crate::tcn::LayerParams {
                    weight: next(),
                    bias: next(),
                })
                .collect();
            stages.push(crate::tcn::StageParams {
                proj_weight,
                proj_bias,
                layers,
                head_weight: next(),
                head_bias: next(),
                dropout: config.dropout,
            });
        }
        Ok(Self {
            config,
            fusion,
            stages: MultiStageParams { stages },
        })
    }

    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> ModelVars {
        ModelVars {
            fusion: self.fusion.bind(tape, requires_grad),
            stages: self
                .stages
                .stages
                .iter()
                .map(|s| s.bind(tape, requires_grad))
                .collect(),
        }
    }

    /// Records fusion and all stages for one video.
    pub fn forward_on_tape<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        rgb: Var,
        flow: Var,
        dropout: Option<&mut R>,
    ) -> Result<ForwardPass> {
        let schedule = self.config.schedule();
        let (alpha, fused) = fuse_on_tape(tape, rgb, flow, &vars.fusion)?;
        let outs = multistage_on_tape(tape, fused, &vars.stages, &schedule, dropout)?;
        Ok(ForwardPass {
            alpha,
            fused,
            stage_probs: outs.iter().map(|o| o.probs).collect(),
        })
    }

    /// Inference: probabilities of every stage.
    pub fn predict_stages(&self, rgb: &Tensor, flow: &Tensor) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let r = tape.constant(rgb.clone());
        let f = tape.constant(flow.clone());
        let pass = self.forward_on_tape::<rand_chacha::ChaCha8Rng>(&mut tape, &vars, r, f, None)?;
        Ok(pass
            .stage_probs
            .iter()
            .map(|&p| tape.value(p).clone())
            .collect())
    }

    /// Frame labels from the last stage.
    pub fn predict(&self, rgb: &Tensor, flow: &Tensor) -> Result<Vec<usize>> {
        let stages = self.predict_stages(rgb, flow)?;
        Ok(stages.last().expect("at least one stage").argmax_rows())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> ModelConfig {
        ModelConfig {
            channels: 6,
            layers: 3,
            stages: 2,
            ..ModelConfig::standard(4, 3)
        }
    }

    #[test]
    fn block_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ModelParams::init(small(), &mut rng).unwrap();
        let blocks = p.tensors().iter().map(|t| t.data().to_vec()).collect();
        let q = ModelParams::from_blocks(small(), blocks).unwrap();
        assert_eq!(p, q);
        let shapes: Vec<Vec<usize>> = p.tensors().iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, ModelParams::expected_shapes(&small()));
    }

    #[test]
    fn inference_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ModelParams::init(small(), &mut rng).unwrap();
        let x = Tensor::new(&[10, 4], (0..40).map(|i| (i as f64 * 0.3).sin()).collect()).unwrap();
        let a = p.predict_stages(&x, &x).unwrap();
        let b = p.predict_stages(&x, &x).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        for probs in &a {
            for t in 0..10 {
                assert!((probs.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bad_config_rejected() {
        let mut c = small();
        c.kernel = 4;
        assert!(c.validate().is_err());
        c.kernel = 3;
        c.dropout = 1.0;
        assert!(c.validate().is_err());
    }
}
