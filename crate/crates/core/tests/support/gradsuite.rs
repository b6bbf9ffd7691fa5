//! Finite-difference checks over every tape operation, the model blocks and
//! each loss term. Shared with the acceptance harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use subtask_core::fusion::{fuse_on_tape, FusionVars};
use subtask_core::loss::{
    composite_on_tape, cross_entropy_on_tape, t_mse_on_tape, transition_on_tape, LossConfig,
    TransitionMatrix,
};
use subtask_core::numcore::{
    gradcheck, Elementwise, GradCheck, GradCheckConfig, Tape, Tensor, Var,
};
use subtask_core::tcn::{make_schedule, stage_on_tape, ScheduleKind, StageVars};
use subtask_core::Result;

pub fn normal(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
    .unwrap()
}

/// Values at least `margin` away from `at`.
fn away(rng: &mut ChaCha8Rng, shape: &[usize], at: f64, margin: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.sample(StandardNormal);
            at + v.signum() * (margin + v.abs())
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

fn positive(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(0.2..2.0)).collect()).unwrap()
}

type Case = (
    &'static str,
    Vec<Tensor>,
    Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>,
);

fn unary(kind: Elementwise) -> Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>> {
    Box::new(move |t, v| t.elementwise(kind, &[v[0]]))
}

/// Squared log-distances of consecutive rows of `softmax(logits)`.
fn frame_distances(logits: &Tensor) -> Vec<f64> {
    let p = subtask_core::numcore::softmax_rows(logits).unwrap();
    (1..p.rows())
        .map(|t| {
            p.row(t)
                .iter()
                .zip(p.row(t - 1))
                .map(|(a, b)| (a.ln() - b.ln()).powi(2))
                .sum()
        })
        .collect()
}

/// Logits and a truncation level with some frames on each side and every
/// frame at least 10% away from the boundary.
fn tmse_setup(rng: &mut ChaCha8Rng) -> (Tensor, f64) {
    loop {
        let logits = normal(rng, &[8, 4], 1.5);
        let mut d = frame_distances(&logits);
        d.sort_by(f64::total_cmp);
        let mid = d.len() / 2;
        let tau = (d[mid - 1] * d[mid]).sqrt();
        if d.iter().all(|x| (x - tau).abs() > 0.1 * tau) {
            return (logits, tau);
        }
    }
}

fn cases(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let mut c: Vec<Case> = Vec::new();
    for (k, d) in [(3, 1), (3, 2), (3, 4), (5, 2)] {
        c.push((
            "conv1d",
            vec![
                normal(rng, &[9, 3], 1.0),
                normal(rng, &[2, 3, k], 1.0),
                normal(rng, &[2], 1.0),
            ],
            Box::new(move |t, v| t.conv1d(v[0], v[1], v[2], d)),
        ));
    }
    c.push((
        "linear",
        vec![
            normal(rng, &[5, 4], 1.0),
            normal(rng, &[3, 4], 1.0),
            normal(rng, &[3], 1.0),
        ],
        Box::new(|t, v| t.linear(v[0], v[1], v[2])),
    ));
    c.push((
        "matmul",
        vec![normal(rng, &[4, 3], 1.0), normal(rng, &[3, 5], 1.0)],
        Box::new(|t, v| t.matmul(v[0], v[1])),
    ));
    c.push((
        "relu",
        vec![away(rng, &[6, 3], 0.0, 0.1)],
        unary(Elementwise::Relu),
    ));
    c.push((
        "sigmoid",
        vec![normal(rng, &[6, 3], 2.0)],
        unary(Elementwise::Sigmoid),
    ));
    c.push(("log", vec![positive(rng, &[6, 3])], unary(Elementwise::Log)));
    c.push((
        "abs",
        vec![away(rng, &[6, 3], 0.0, 0.1)],
        unary(Elementwise::Abs),
    ));
    c.push((
        "min_scalar",
        vec![away(rng, &[6, 3], 0.3, 0.1)],
        unary(Elementwise::MinScalar(0.3)),
    ));
    c.push((
        "scale",
        vec![normal(rng, &[6, 3], 1.0)],
        Box::new(|t, v| Ok(t.scale(v[0], -2.5))),
    ));
    c.push((
        "add_scalar",
        vec![normal(rng, &[6, 3], 1.0)],
        Box::new(|t, v| Ok(t.add_scalar(v[0], 0.7))),
    ));
    for (name, kind) in [
        ("add", Elementwise::Add),
        ("sub", Elementwise::Sub),
        ("mul", Elementwise::Mul),
    ] {
        c.push((
            name,
            vec![normal(rng, &[4, 3], 1.0), normal(rng, &[4, 3], 1.0)],
            Box::new(move |t, v| t.elementwise(kind, &[v[0], v[1]])),
        ));
    }
    c.push((
        "softmax_rows",
        vec![normal(rng, &[5, 4], 2.0)],
        Box::new(|t, v| t.softmax_rows(v[0])),
    ));
    c.push((
        "slice_rows",
        vec![normal(rng, &[6, 3], 1.0)],
        Box::new(|t, v| t.slice_rows(v[0], 1, 4)),
    ));
    c.push((
        "slice_cols",
        vec![normal(rng, &[6, 4], 1.0)],
        Box::new(|t, v| t.slice_cols(v[0], 1, 3)),
    ));
    c.push((
        "concat_cols",
        vec![normal(rng, &[4, 2], 1.0), normal(rng, &[4, 3], 1.0)],
        Box::new(|t, v| t.concat_cols(v[0], v[1])),
    ));
    c.push((
        "row_sum",
        vec![normal(rng, &[5, 3], 1.0)],
        Box::new(|t, v| t.row_sum(v[0])),
    ));
    c.push((
        "sum",
        vec![normal(rng, &[5, 3], 1.0)],
        Box::new(|t, v| Ok(t.sum(v[0]))),
    ));
    c.push((
        "pick",
        vec![normal(rng, &[4, 3], 1.0)],
        Box::new(|t, v| t.pick(v[0], &[2, 0, 1, 2])),
    ));
    c.push((
        "fusion",
        vec![
            normal(rng, &[5, 3], 1.0),
            normal(rng, &[5, 3], 1.0),
            normal(rng, &[3, 6], 0.5),
            normal(rng, &[3], 0.5),
        ],
        Box::new(|t, v| {
            Ok(fuse_on_tape(
                t,
                v[0],
                v[1],
                &FusionVars {
                    weight: v[2],
                    bias: v[3],
                },
            )?
            .1)
        }),
    ));
    let schedule = make_schedule(ScheduleKind::Fibonacci, 2).unwrap();
    c.push((
        "stage",
        vec![
            normal(rng, &[10, 3], 1.0),
            normal(rng, &[4, 3], 0.5),
            normal(rng, &[4], 0.5),
            normal(rng, &[4, 4, 3], 0.3),
            normal(rng, &[4], 0.3),
            normal(rng, &[4, 4, 3], 0.3),
            normal(rng, &[4], 0.3),
            normal(rng, &[5, 4], 0.5),
            normal(rng, &[5], 0.5),
        ],
        Box::new(move |t, v| {
            let vars = StageVars {
                proj_weight: v[1],
                proj_bias: v[2],
                layers: vec![(v[3], v[4]), (v[5], v[6])],
                head_weight: v[7],
                head_bias: v[8],
                dropout: 0.0,
            };
            Ok(stage_on_tape::<ChaCha8Rng>(t, v[0], &vars, &schedule, None)?.probs)
        }),
    ));

    let labels: Vec<usize> = (0..8).map(|_| rng.random_range(0..4)).collect();
    let weights: Vec<f64> = (0..4).map(|_| rng.random_range(0.5..2.0)).collect();
    let (l, w) = (labels.clone(), weights.clone());
    c.push((
        "cross_entropy",
        vec![normal(rng, &[8, 4], 1.5)],
        Box::new(move |t, v| {
            let p = t.softmax_rows(v[0])?;
            cross_entropy_on_tape(t, p, &l, &w)
        }),
    ));
    let (logits, tau) = tmse_setup(rng);
    c.push((
        "t_mse",
        vec![logits],
        Box::new(move |t, v| {
            let p = t.softmax_rows(v[0])?;
            t_mse_on_tape(t, p, tau)
        }),
    ));
    let matrix =
        TransitionMatrix::new(4, vec![0, 1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 1, 0, 1, 0, 0]).unwrap();
    let m = matrix.clone();
    c.push((
        "transition",
        vec![normal(rng, &[8, 4], 1.5)],
        Box::new(move |t, v| {
            let p = t.softmax_rows(v[0])?;
            transition_on_tape(t, p, &m)
        }),
    ));
    let (logits, tau) = tmse_setup(rng);
    let second = normal(rng, &[8, 4], 1.5);
    let cfg = LossConfig {
        lambda: 0.15,
        gamma: 0.25,
        tau,
        class_weights: weights,
    };
    c.push((
        "composite",
        vec![logits, second],
        Box::new(move |t, v| {
            let a = t.softmax_rows(v[0])?;
            let b = t.softmax_rows(v[1])?;
            Ok(composite_on_tape(t, &[a, b], &labels, &cfg, &matrix)?.total)
        }),
    ));
    c
}

/// Runs every case; returns `(name, report)` pairs.
pub fn run_suite(seed: u64) -> Vec<(&'static str, GradCheck)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = GradCheckConfig::default();
    cases(&mut rng)
        .into_iter()
        .map(|(name, inputs, f)| (name, gradcheck(&inputs, f, &cfg, &mut rng).unwrap()))
        .collect()
}
