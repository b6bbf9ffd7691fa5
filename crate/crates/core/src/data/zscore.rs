use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::numcore::Tensor;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel mean and standard deviation of training frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScore {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZScore {
    /// Statistics over the concatenated frames of `train`; std is the
    /// population deviation floored at [`STD_FLOOR`].
    pub fn fit(train: &[&Tensor]) -> Result<Self> {
        let first = train
            .first()
            .ok_or_else(|| Error::Usage("z-score fit needs training data".into()))?;
        let d = first.cols();
        let mut mean = vec![0.0; d];
        let mut frames = 0usize;
        for x in train {
            if x.shape().len() != 2 || x.cols() != d {
                return Err(dim_err!("expected width {}, got shape {:?}", d, x.shape()));
            }
            for t in 0..x.rows() {
                for (m, v) in mean.iter_mut().zip(x.row(t)) {
                    *m += v;
                }
            }
            frames += x.rows();
        }
        mean.iter_mut().for_each(|m| *m /= frames as f64);
        let mut var = vec![0.0; d];
        for x in train {
            for t in 0..x.rows() {
                for ((s, v), m) in var.iter_mut().zip(x.row(t)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let std = var
            .iter()
            .map(|s| libm::sqrt(s / frames as f64).max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || x.cols() != self.dim() {
            return Err(dim_err!(
                "expected width {}, got shape {:?}",
                self.dim(),
                x.shape()
            ));
        }
        let d = self.dim();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % d]) / self.std[i % d])
            .collect();
        Tensor::new(x.shape(), data)
    }
}

/// Fits on `train` and normalizes both `train` and `others` with it.
pub fn zscore_fit_apply(
    train: &[Tensor],
    others: &[Tensor],
) -> Result<(Vec<Tensor>, Vec<Tensor>, ZScore)> {
    let stats = ZScore::fit(&train.iter().collect::<Vec<_>>())?;
    let a = train
        .iter()
        .map(|x| stats.apply(x))
        .collect::<Result<Vec<_>>>()?;
    let b = others
        .iter()
        .map(|x| stats.apply(x))
        .collect::<Result<Vec<_>>>()?;
    Ok((a, b, stats))
}
