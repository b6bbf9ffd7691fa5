//! Training objective summed over stages:
//! `Σ_s CE(s) + λ·TMSE(s) + γ·Trans(s)`.
//!
//! * `CE` is class-weighted frame cross-entropy averaged over `T`.
//! * `TMSE` averages `min(‖log P_t − log P_{t−1}‖², τ)` over adjacent frames.
//! * `Trans` averages `w_t · ‖P_t − P_{t−1}‖₁` with `w_t = P_{t−1}ᵀ M P_t`,
//!   where `M` flags invalid label transitions.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::numcore::{Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub tau: f64,
    pub class_weights: Vec<f64>,
}

impl LossConfig {
    /// λ = 0.15, γ = 0.25, τ = 4 with unit class weights.
    pub fn standard(classes: usize) -> Self {
        Self {
            lambda: 0.15,
            gamma: 0.25,
            tau: 4.0,
            class_weights: vec![1.0; classes],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(alloc::format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.lambda >= 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::Config("lambda and gamma must be nonnegative".into()));
        }
        if self
            .class_weights
            .iter()
            .any(|w| !w.is_finite() || *w <= 0.0)
        {
            return Err(Error::Config(
                "class weights must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// Inverse-frequency class weights `T_total / (C · count_c)`, rescaled to mean 1.
///
/// Classes that never occur are counted once.
pub fn inverse_frequency_weights<'a>(
    sequences: impl IntoIterator<Item = &'a [usize]>,
    classes: usize,
) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    let mut total = 0usize;
    for seq in sequences {
        for &c in seq {
            counts[c] += 1;
            total += 1;
        }
    }
    let raw: Vec<f64> = counts
        .iter()
        .map(|&n| total.max(1) as f64 / (classes as f64 * n.max(1) as f64))
        .collect();
    let mean = raw.iter().sum::<f64>() / classes as f64;
    raw.iter().map(|w| w / mean).collect()
}

/// Binary `C × C` matrix; entry `(i, j)` is 1 when `i → j` is invalid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMatrix {
    size: usize,
    invalid: Vec<u8>,
}

impl TransitionMatrix {
    pub fn new(size: usize, entries: Vec<u8>) -> Result<Self> {
        if size == 0 || entries.len() != size * size {
            return Err(dim_err!(
                "transition matrix of size {} needs {} entries",
                size,
                size * size
            ));
        }
        if entries.iter().any(|&e| e > 1) {
            return Err(Error::Parameter("transition entries must be 0 or 1".into()));
        }
        if (0..size).any(|i| entries[i * size + i] != 0) {
            return Err(Error::Parameter(
                "self-transitions must be valid (zero diagonal)".into(),
            ));
        }
        Ok(Self {
            size,
            invalid: entries,
        })
    }

    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            invalid: vec![0; size * size],
        }
    }

    /// Marks `i → j` valid iff `i == j` or `j` directly follows `i` in one of
    /// the given label sequences.
    pub fn from_sequences<'a>(
        size: usize,
        sequences: impl IntoIterator<Item = &'a [usize]>,
    ) -> Self {
        let mut invalid = vec![1u8; size * size];
        for i in 0..size {
            invalid[i * size + i] = 0;
        }
        for seq in sequences {
            for w in seq.windows(2) {
                invalid[w[0] * size + w[1]] = 0;
            }
        }
        Self { size, invalid }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_invalid(&self, from: usize, to: usize) -> bool {
        self.invalid[from * self.size + to] == 1
    }

    pub fn entries(&self) -> &[u8] {
        &self.invalid
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self.invalid.iter().map(|&e| e as f64).collect();
        Tensor::new(&[self.size, self.size], data).expect("square matrix")
    }

    /// Number of adjacent label pairs `(a, b)` with `a ≠ b` flagged invalid.
    pub fn invalid_pairs(&self, labels: &[usize]) -> usize {
        labels
            .windows(2)
            .filter(|w| w[0] != w[1] && self.is_invalid(w[0], w[1]))
            .count()
    }
}

fn check_labels(tape: &Tape, probs: Var, labels: &[usize]) -> Result<()> {
    let p = tape.value(probs);
    if p.shape().len() != 2 {
        return Err(dim_err!("probabilities must be T×C, got {:?}", p.shape()));
    }
    if labels.is_empty() || p.rows() != labels.len() {
        return Err(dim_err!(
            "{} frames of probabilities but {} labels",
            p.rows(),
            labels.len()
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&c| c >= p.cols()) {
        return Err(dim_err!("label {} outside {} classes", bad, p.cols()));
    }
    Ok(())
}

/// `−(1/T) Σ_t weight[c_t] · log P[t, c_t]`.
pub fn cross_entropy_on_tape(
    tape: &mut Tape,
    probs: Var,
    labels: &[usize],
    weights: &[f64],
) -> Result<Var> {
    check_labels(tape, probs, labels)?;
    if weights.len() != tape.value(probs).cols() {
        return Err(dim_err!(
            "{} class weights for {} classes",
            weights.len(),
            tape.value(probs).cols()
        ));
    }
    let t_len = labels.len() as f64;
    let logp = tape.log(probs);
    let picked = tape.pick(logp, labels)?;
    let w = tape.constant(Tensor::vector(labels.iter().map(|&c| weights[c]).collect()));
    let weighted = tape.mul(picked, w)?;
    let total = tape.sum(weighted);
    Ok(tape.scale(total, -1.0 / t_len))
}

/// Truncated temporal MSE of log-probabilities. `T < 2` yields 0.
pub fn t_mse_on_tape(tape: &mut Tape, probs: Var, tau: f64) -> Result<Var> {
    let p = tape.value(probs);
    if p.shape().len() != 2 {
        return Err(dim_err!("probabilities must be T×C, got {:?}", p.shape()));
    }
    let t_len = p.rows();
    if t_len < 2 {
        log::warn!("t_mse on a single frame is degenerate; returning 0");
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let logp = tape.log(probs);
    let next = tape.slice_rows(logp, 1, t_len)?;
    let prev = tape.slice_rows(logp, 0, t_len - 1)?;
    let diff = tape.sub(next, prev)?;
    let sq = tape.mul(diff, diff)?;
    let per_step = tape.row_sum(sq)?;
    let clipped = tape.min_scalar(per_step, tau);
    let total = tape.sum(clipped);
    Ok(tape.scale(total, 1.0 / (t_len - 1) as f64))
}

/// Transition-aware penalty. `T < 2` yields 0.
pub fn transition_on_tape(tape: &mut Tape, probs: Var, matrix: &TransitionMatrix) -> Result<Var> {
    let p = tape.value(probs);
    if p.shape().len() != 2 {
        return Err(dim_err!("probabilities must be T×C, got {:?}", p.shape()));
    }
    if p.cols() != matrix.size() {
        return Err(dim_err!(
            "{} classes but transition matrix is {}×{}",
            p.cols(),
            matrix.size(),
            matrix.size()
        ));
    }
    let t_len = p.rows();
    if t_len < 2 {
        log::warn!("transition loss on a single frame is degenerate; returning 0");
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let m = tape.constant(matrix.to_tensor());
    let prev = tape.slice_rows(probs, 0, t_len - 1)?;
    let next = tape.slice_rows(probs, 1, t_len)?;
    let through = tape.matmul(prev, m)?;
    let joint = tape.mul(through, next)?;
    let weight = tape.row_sum(joint)?;
    let diff = tape.sub(next, prev)?;
    let abs = tape.abs(diff);
    let l1 = tape.row_sum(abs)?;
    let term = tape.mul(weight, l1)?;
    let total = tape.sum(term);
    Ok(tape.scale(total, 1.0 / (t_len - 1) as f64))
}

/// Per-term handles of the composite loss.
#[derive(Debug, Clone)]
pub struct CompositeTerms {
    pub total: Var,
    pub cross_entropy: Vec<Var>,
    pub t_mse: Vec<Var>,
    pub transition: Vec<Var>,
}

pub fn composite_on_tape(
    tape: &mut Tape,
    stage_probs: &[Var],
    labels: &[usize],
    config: &LossConfig,
    matrix: &TransitionMatrix,
) -> Result<CompositeTerms> {
    if stage_probs.is_empty() {
        return Err(Error::Usage(
            "composite loss needs at least one stage".into(),
        ));
    }
    config.validate()?;
    let mut terms = CompositeTerms {
        total: tape.constant(Tensor::scalar(0.0)),
        cross_entropy: Vec::new(),
        t_mse: Vec::new(),
        transition: Vec::new(),
    };
    let mut total = terms.total;
    for &p in stage_probs {
        let ce = cross_entropy_on_tape(tape, p, labels, &config.class_weights)?;
        terms.cross_entropy.push(ce);
        total = tape.add(total, ce)?;
        if config.lambda > 0.0 {
            let tm = t_mse_on_tape(tape, p, config.tau)?;
            terms.t_mse.push(tm);
            let s = tape.scale(tm, config.lambda);
            total = tape.add(total, s)?;
        }
        if config.gamma > 0.0 {
            let tr = transition_on_tape(tape, p, matrix)?;
            terms.transition.push(tr);
            let s = tape.scale(tr, config.gamma);
            total = tape.add(total, s)?;
        }
    }
    terms.total = total;
    Ok(terms)
}

fn scalar_of(f: impl FnOnce(&mut Tape, Var) -> Result<Var>, probs: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.constant(probs.clone());
    let out = f(&mut tape, p)?;
    Ok(tape.value(out).data()[0])
}

pub fn cross_entropy(probs: &Tensor, labels: &[usize], weights: &[f64]) -> Result<f64> {
    scalar_of(|t, p| cross_entropy_on_tape(t, p, labels, weights), probs)
}

pub fn t_mse(probs: &Tensor, tau: f64) -> Result<f64> {
    scalar_of(|t, p| t_mse_on_tape(t, p, tau), probs)
}

pub fn transition_loss(probs: &Tensor, matrix: &TransitionMatrix) -> Result<f64> {
    scalar_of(|t, p| transition_on_tape(t, p, matrix), probs)
}

pub fn composite_loss(
    stage_probs: &[Tensor],
    labels: &[usize],
    config: &LossConfig,
    matrix: &TransitionMatrix,
) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = stage_probs
        .iter()
        .map(|p| tape.constant(p.clone()))
        .collect();
    let terms = composite_on_tape(&mut tape, &vars, labels, config, matrix)?;
    Ok(tape.value(terms.total).data()[0])
}
