//! Attention fusion of an RGB stream and a flow stream.
//!
//! For every frame `t` an affine layer over the concatenated descriptors
//! yields per-channel coefficients `α(t) = σ(W_a [rgb_t; flow_t] + b_a)` and
//! the fused descriptor is `α(t) ⊙ rgb_t + (1 − α(t)) ⊙ flow_t`. The fused
//! width equals the per-modality width `D`.

use alloc::vec::Vec;
use rand::Rng;

use crate::error::{dim_err, Error, Result};
use crate::numcore::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Rgb,
    Flow,
    Fused,
}

/// `T × D` per-time-step descriptors of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    modality: Modality,
    values: Tensor,
}

impl FeatureSequence {
    pub fn new(modality: Modality, values: Tensor) -> Result<Self> {
        if values.shape().len() != 2 {
            return Err(dim_err!(
                "feature sequence must be T×D, got {:?}",
                values.shape()
            ));
        }
        if !values.all_finite() {
            return Err(Error::Numerical(
                "feature sequence holds non-finite values".into(),
            ));
        }
        Ok(Self { modality, values })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_values(self) -> Tensor {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }
}

/// Attention layer weights: `weight` is `D × 2D`, `bias` has `D` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl FusionParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[dim, 2 * dim]),
            bias: Tensor::zeros(&[dim]),
        }
    }

    /// Weights uniform in `±1/√(2D)`, zero bias.
    pub fn init<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / libm::sqrt((2 * dim) as f64);
        let data: Vec<f64> = (0..dim * 2 * dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            weight: Tensor::new(&[dim, 2 * dim], data).expect("fusion weight shape"),
            bias: Tensor::zeros(&[dim]),
        }
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> FusionVars {
        FusionVars {
            weight: tape.leaf(self.weight.clone(), requires_grad),
            bias: tape.leaf(self.bias.clone(), requires_grad),
        }
    }
}

/// Tape handles of [`FusionParams`].
#[derive(Debug, Clone, Copy)]
pub struct FusionVars {
    pub weight: Var,
    pub bias: Var,
}

fn check_pair(tape: &Tape, rgb: Var, flow: Var, dim: usize) -> Result<()> {
    let (a, b) = (tape.value(rgb).shape(), tape.value(flow).shape());
    if a.len() != 2 || a != b {
        return Err(dim_err!("rgb {:?} and flow {:?} differ", a, b));
    }
    if a[1] != dim {
        return Err(dim_err!(
            "modality width {} but fusion expects {}",
            a[1],
            dim
        ));
    }
    Ok(())
}

/// Records `α` and the fused sequence; returns `(alpha, fused)`.
pub fn fuse_on_tape(
    tape: &mut Tape,
    rgb: Var,
    flow: Var,
    params: &FusionVars,
) -> Result<(Var, Var)> {
    let dim = tape.value(params.bias).len();
    check_pair(tape, rgb, flow, dim)?;
    let joint = tape.concat_cols(rgb, flow)?;
    let pre = tape.linear(joint, params.weight, params.bias)?;
    let alpha = tape.sigmoid(pre);
    let from_rgb = tape.mul(alpha, rgb)?;
    let neg = tape.scale(alpha, -1.0);
    let complement = tape.add_scalar(neg, 1.0);
    let from_flow = tape.mul(complement, flow)?;
    let fused = tape.add(from_rgb, from_flow)?;
    Ok((alpha, fused))
}

fn evaluate(
    rgb: &FeatureSequence,
    flow: &FeatureSequence,
    params: &FusionParams,
) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let r = tape.constant(rgb.values.clone());
    let f = tape.constant(flow.values.clone());
    let vars = params.bind(&mut tape, false);
    let (alpha, fused) = fuse_on_tape(&mut tape, r, f, &vars)?;
    Ok((tape.value(alpha).clone(), tape.value(fused).clone()))
}

/// Per-frame, per-channel coefficients `α`, a `T × D` tensor in `(0, 1)`.
pub fn attention_coefficients(
    rgb: &FeatureSequence,
    flow: &FeatureSequence,
    params: &FusionParams,
) -> Result<Tensor> {
    evaluate(rgb, flow, params).map(|(a, _)| a)
}

pub fn fuse(
    rgb: &FeatureSequence,
    flow: &FeatureSequence,
    params: &FusionParams,
) -> Result<FeatureSequence> {
    let (_, fused) = evaluate(rgb, flow, params)?;
    FeatureSequence::new(Modality::Fused, fused)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::sigmoid;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(m: Modality, t: usize, d: usize, rng: &mut ChaCha8Rng) -> FeatureSequence {
        let data = (0..t * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        FeatureSequence::new(m, Tensor::new(&[t, d], data).unwrap()).unwrap()
    }

    #[test]
    fn zero_params_give_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (r, f) = (
            seq(Modality::Rgb, 5, 3, &mut rng),
            seq(Modality::Flow, 5, 3, &mut rng),
        );
        let a = attention_coefficients(&r, &f, &FusionParams::zeros(3)).unwrap();
        assert!(a.data().iter().all(|&v| v == 0.5));
        let fused = fuse(&r, &f, &FusionParams::zeros(3)).unwrap();
        assert_eq!(fused.dim(), 3);
        for i in 0..15 {
            let mean = 0.5 * (r.values().data()[i] + f.values().data()[i]);
            assert!((fused.values().data()[i] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_bias_selects_one_modality() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (r, f) = (
            seq(Modality::Rgb, 4, 3, &mut rng),
            seq(Modality::Flow, 4, 3, &mut rng),
        );
        let mut p = FusionParams::zeros(3);
        p.bias = Tensor::full(&[3], 50.0);
        let a = attention_coefficients(&r, &f, &p).unwrap();
        assert!(a.data().iter().all(|&v| (1.0 - v) < 1e-6));
        let to_rgb = fuse(&r, &f, &p).unwrap();
        assert!(to_rgb
            .values()
            .data()
            .iter()
            .zip(r.values().data())
            .all(|(a, b)| (a - b).abs() < 1e-12));
        p.bias = Tensor::full(&[3], -50.0);
        let to_flow = fuse(&r, &f, &p).unwrap();
        assert!(to_flow
            .values()
            .data()
            .iter()
            .zip(f.values().data())
            .all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (t, d) = (4, 3);
        let (r, f) = (
            seq(Modality::Rgb, t, d, &mut rng),
            seq(Modality::Flow, t, d, &mut rng),
        );
        let mut p = FusionParams::init(d, &mut rng);
        p.bias = Tensor::vector(vec![0.3, -0.2, 0.1]);
        let a = attention_coefficients(&r, &f, &p).unwrap();
        for ti in 0..t {
            for o in 0..d {
                let mut z = p.bias.data()[o];
                for i in 0..d {
                    z += p.weight.get2(o, i) * r.values().get2(ti, i);
                    z += p.weight.get2(o, d + i) * f.values().get2(ti, i);
                }
                assert!((a.get2(ti, o) - sigmoid(z)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mismatched_modalities_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = seq(Modality::Rgb, 4, 3, &mut rng);
        let short = seq(Modality::Flow, 3, 3, &mut rng);
        let narrow = seq(Modality::Flow, 4, 2, &mut rng);
        let p = FusionParams::zeros(3);
        assert!(matches!(fuse(&r, &short, &p), Err(Error::Dimension(_))));
        assert!(matches!(fuse(&r, &narrow, &p), Err(Error::Dimension(_))));
    }
}
