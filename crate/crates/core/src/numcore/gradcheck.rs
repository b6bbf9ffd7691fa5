//! Central finite-difference checks of tape gradients.

use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Probed coordinates per input tensor.
    pub probes_per_input: usize,
    pub step: f64,
    /// Below this magnitude both derivatives count as equal.
    pub abs_floor: f64,
    /// Relative disagreement of the one-sided slopes that marks a kink.
    pub kink_tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            probes_per_input: 4,
            step: 1e-6,
            abs_floor: 1e-7,
            kink_tolerance: 1e-3,
        }
    }
}

/// Outcome of [`gradcheck`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub probes: usize,
    /// Probes skipped because the function is not smooth there.
    pub kinks: usize,
    pub max_rel_err: f64,
    /// `(input, index, analytic, numeric)` of the worst probe.
    pub worst: Option<(usize, usize, f64, f64)>,
}

fn evaluate<F>(
    inputs: &[Tensor],
    f: &F,
    weights: &mut Option<Tensor>,
    rng: &mut impl Rng,
) -> Result<(Tape, Var, Vec<Var>)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let out = if tape.value(out).len() == 1 {
        out
    } else {
        let shape = tape.value(out).shape().to_vec();
        let w = weights
            .get_or_insert_with(|| {
                let n = shape.iter().product();
                Tensor::new(&shape, (0..n).map(|_| rng.sample(StandardNormal)).collect())
                    .expect("shape")
            })
            .clone();
        let w = tape.constant(w);
        let p = tape.mul(out, w)?;
        tape.sum(p)
    };
    Ok((tape, out, vars))
}

/// Compares the tape gradient of `f` with central differences at randomly
/// chosen coordinates of every input.
///
/// Non-scalar outputs are reduced by a fixed random projection. Probes where
/// the forward and backward one-sided slopes disagree are skipped as kinks.
pub fn gradcheck<F, R>(
    inputs: &[Tensor],
    f: F,
    cfg: &GradCheckConfig,
    rng: &mut R,
) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    R: Rng + ?Sized,
{
    let mut rng = rng;
    let mut weights = None;
    let (mut tape, out, vars) = evaluate(inputs, &f, &mut weights, &mut rng)?;
    let f0 = tape.value(out).data()[0];
    tape.backward(out)?;
    let grads: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| {
            tape.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| alloc::vec![0.0; tape.value(v).len()])
        })
        .collect();
    let value_at =
        |inputs: &[Tensor], weights: &mut Option<Tensor>, rng: &mut &mut R| -> Result<f64> {
            let (tape, out, _) = evaluate(inputs, &f, weights, rng)?;
            Ok(tape.value(out).data()[0])
        };
    let mut report = GradCheck {
        probes: 0,
        kinks: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    let h = cfg.step;
    for (i, x) in inputs.iter().enumerate() {
        if x.is_empty() {
            continue;
        }
        let mut done = 0;
        let mut attempts = 0;
        while done < cfg.probes_per_input && attempts < 20 * cfg.probes_per_input {
            attempts += 1;
            let j = rng.random_range(0..x.len());
            let mut moved = inputs.to_vec();
            moved[i].data_mut()[j] = x.data()[j] + h;
            let fp = value_at(&moved, &mut weights, &mut rng)?;
            moved[i].data_mut()[j] = x.data()[j] - h;
            let fm = value_at(&moved, &mut weights, &mut rng)?;
            let (sp, sm) = ((fp - f0) / h, (f0 - fm) / h);
            if (sp - sm).abs() > cfg.kink_tolerance * sp.abs().max(sm.abs()).max(1.0) {
                report.kinks += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = grads[i][j];
            let err = if analytic.abs().max(numeric.abs()) < cfg.abs_floor {
                0.0
            } else {
                (analytic - numeric).abs() / analytic.abs().max(numeric.abs())
            };
            if !err.is_finite() {
                return Err(Error::Numerical(alloc::format!(
                    "gradient check produced {}",
                    err
                )));
            }
            if err >= report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((i, j, analytic, numeric));
            }
            report.probes += 1;
            done += 1;
        }
    }
    Ok(report)
}
