use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};

/// Sampled multi-axis motion on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dt: f64,
    pos: Vec<Vec<f64>>,
    vel: Vec<Vec<f64>>,
    acc: Vec<Vec<f64>>,
}

impl Trajectory {
    /// `pos[i][a]` is axis `a` at time `i·dt`; likewise `vel` and `acc`.
    pub fn new(
        dt: f64,
        pos: Vec<Vec<f64>>,
        vel: Vec<Vec<f64>>,
        acc: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Parameter(alloc::format!(
                "dt {} must be positive",
                dt
            )));
        }
        if pos.len() < 2 {
            return Err(Error::Usage(
                "a trajectory needs at least two samples".into(),
            ));
        }
        let axes = pos[0].len();
        let ok = |v: &Vec<Vec<f64>>| v.len() == pos.len() && v.iter().all(|r| r.len() == axes);
        if axes == 0 || !ok(&pos) || !ok(&vel) || !ok(&acc) {
            return Err(dim_err!("trajectory samples must share one axis count"));
        }
        if [&pos, &vel, &acc]
            .iter()
            .any(|v| v.iter().flatten().any(|x| !x.is_finite()))
        {
            return Err(Error::Numerical(
                "trajectory holds non-finite values".into(),
            ));
        }
        Ok(Self { dt, pos, vel, acc })
    }

    /// Derivatives by central differences (one-sided at the ends).
    pub fn from_positions(dt: f64, pos: Vec<Vec<f64>>) -> Result<Self> {
        let vel = differentiate(&pos, dt);
        let acc = differentiate(&vel, dt);
        Self::new(dt, pos, vel, acc)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn axes(&self) -> usize {
        self.pos[0].len()
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.pos
    }

    pub fn velocities(&self) -> &[Vec<f64>] {
        &self.vel
    }

    pub fn accelerations(&self) -> &[Vec<f64>] {
        &self.acc
    }

    pub fn first(&self) -> &[f64] {
        &self.pos[0]
    }

    pub fn last(&self) -> &[f64] {
        &self.pos[self.len() - 1]
    }

    /// Largest per-axis spread of positions.
    pub fn range(&self) -> f64 {
        (0..self.axes())
            .map(|a| {
                let (lo, hi) = self
                    .pos
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                        (lo.min(p[a]), hi.max(p[a]))
                    });
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Root-mean-square position difference over samples and axes.
    pub fn rmse(&self, other: &Trajectory) -> Result<f64> {
        if self.len() != other.len() || self.axes() != other.axes() {
            return Err(dim_err!(
                "trajectories of {}×{} and {}×{} samples",
                self.len(),
                self.axes(),
                other.len(),
                other.axes()
            ));
        }
        let sq: f64 = self
            .pos
            .iter()
            .flatten()
            .zip(other.pos.iter().flatten())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(libm::sqrt(sq / (self.len() * self.axes()) as f64))
    }
}

fn differentiate(x: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let span = (hi - lo) as f64 * dt;
            x[hi]
                .iter()
                .zip(&x[lo])
                .map(|(a, b)| (a - b) / span)
                .collect()
        })
        .collect()
}

/// Minimum-jerk point-to-point motion with analytic derivatives.
pub fn min_jerk(start: &[f64], goal: &[f64], duration: f64, dt: f64) -> Result<Trajectory> {
    if start.len() != goal.len() {
        return Err(dim_err!(
            "start has {} axes, goal {}",
            start.len(),
            goal.len()
        ));
    }
    if !(duration >= dt) || !(dt > 0.0) {
        return Err(Error::Parameter(alloc::format!(
            "need 0 < dt ≤ duration, got {} and {}",
            dt,
            duration
        )));
    }
    let steps = libm::round(duration / dt) as usize;
    let (mut pos, mut vel, mut acc) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..=steps {
        let u = i as f64 / steps as f64;
        let p = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
        let dp = 30.0 * u * u * (1.0 - u) * (1.0 - u) / duration;
        let ddp = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / (duration * duration);
        let d: Vec<f64> = goal.iter().zip(start).map(|(g, s)| g - s).collect();
        pos.push(start.iter().zip(&d).map(|(s, d)| s + d * p).collect());
        vel.push(d.iter().map(|d| d * dp).collect());
        acc.push(d.iter().map(|d| d * ddp).collect());
    }
    Trajectory::new(duration / steps as f64, pos, vel, acc)
}

/// Attractor gains, phase clock and forcing basis, shared by all axes, plus
/// per-axis weights, start and goal.
#[derive(Debug, Clone, PartialEq)]
pub struct DmpParams {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub alpha_x: f64,
    pub tau_c: f64,
    /// Basis centres in phase, strictly decreasing.
    pub centers: Vec<f64>,
    /// Variance of each basis.
    pub sigma2: Vec<f64>,
    /// `weights[a][i]` is basis `i` on axis `a`.
    pub weights: Vec<Vec<f64>>,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
}

/// `exp(−α_x·i/(N−1))` for `i` in `0..N`.
pub fn basis_centers(n: usize, alpha_x: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| libm::exp(-alpha_x * i as f64 / (n - 1) as f64))
        .collect()
}

/// Per-basis variance `σ_i²` for which basis `i` falls to half activation
/// midway to its successor (the last basis reuses the previous spacing).
pub fn basis_widths(centers: &[f64]) -> Vec<f64> {
    if centers.len() < 2 {
        return vec![1.0; centers.len()];
    }
    let n = centers.len();
    (0..n)
        .map(|i| {
            let j = if i + 1 < n { i } else { i - 1 };
            let half = 0.5 * (centers[j] - centers[j + 1]).abs();
            half * half / (2.0 * core::f64::consts::LN_2)
        })
        .collect()
}

impl DmpParams {
    /// α = 25, β = α/4, τ = 1, α_x = 4, zero weights.
    pub fn skeleton(n_basis: usize, start: &[f64], goal: &[f64], tau_c: f64) -> Result<Self> {
        let p = Self {
            alpha: 25.0,
            beta: 25.0 / 4.0,
            tau: 1.0,
            alpha_x: 4.0,
            tau_c,
            centers: basis_centers(n_basis.max(1), 4.0),
            sigma2: Vec::new(),
            weights: vec![vec![0.0; n_basis]; start.len()],
            start: start.to_vec(),
            goal: goal.to_vec(),
        };
        let p = Self {
            sigma2: basis_widths(&p.centers),
            ..p
        };
        p.validate()?;
        Ok(p)
    }

    pub fn axes(&self) -> usize {
        self.start.len()
    }

    pub fn n_basis(&self) -> usize {
        self.centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("tau", self.tau),
            ("alpha_x", self.alpha_x),
            ("tau_c", self.tau_c),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Parameter(alloc::format!(
                "{} must be positive, got {}",
                name,
                v
            )));
        }
        if self.centers.is_empty() || self.centers.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Parameter(
                "basis centres must be nonempty and strictly decreasing".into(),
            ));
        }
        if self.sigma2.len() != self.centers.len()
            || self.sigma2.iter().any(|v| !(*v > 0.0) || !v.is_finite())
        {
            return Err(Error::Parameter(
                "every basis needs a positive finite width".into(),
            ));
        }
        if self.centers.iter().any(|&c| !(c > 0.0 && c <= 1.0)) {
            return Err(Error::Parameter("basis centres must lie in (0, 1]".into()));
        }
        let axes = self.start.len();
        if axes == 0 || self.goal.len() != axes || self.weights.len() != axes {
            return Err(dim_err!("start, goal and weights must cover the same axes"));
        }
        if self.weights.iter().any(|w| w.len() != self.centers.len()) {
            return Err(dim_err!("every axis needs {} weights", self.centers.len()));
        }
        Ok(())
    }

    /// Phase `exp(−α_x·t/τ_c)`.
    pub fn phase(&self, t: f64) -> f64 {
        phase(t, self.alpha_x, self.tau_c)
    }

    pub fn forcing(&self, s: f64, axis: usize) -> f64 {
        forcing(s, &self.weights[axis], &self.centers, &self.sigma2)
    }
}

pub fn phase(t: f64, alpha_x: f64, tau_c: f64) -> f64 {
    libm::exp(-alpha_x * t / tau_c)
}

pub fn basis(s: f64, center: f64, sigma2: f64) -> f64 {
    let d = s - center;
    libm::exp(-d * d / (2.0 * sigma2))
}

/// Normalized radial-basis mixture `Σ w_i ψ_i(s) / Σ ψ_i(s)`.
pub fn forcing(s: f64, weights: &[f64], centers: &[f64], sigma2: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((w, &c), &v) in weights.iter().zip(centers).zip(sigma2) {
        let psi = basis(s, c, v);
        num += w * psi;
        den += psi;
    }
    num / den.max(1e-12)
}

/// Integrates `τ·ẍ = α(β(g − x) − τ·ẋ) + f(s)` from rest at the start with
/// semi-implicit Euler (velocity first, then position).
pub fn rollout(params: &DmpParams, dt: f64, duration: f64) -> Result<Trajectory> {
    params.validate()?;
    if !(dt > 0.0) || !(duration >= dt) {
        return Err(Error::Parameter(alloc::format!(
            "need 0 < dt ≤ duration, got {} and {}",
            dt,
            duration
        )));
    }
    let steps = libm::round(duration / dt) as usize;
    let axes = params.axes();
    let accel = |x: &[f64], v: &[f64], s: f64| -> Vec<f64> {
        (0..axes)
            .map(|a| {
                let spring =
                    params.alpha * (params.beta * (params.goal[a] - x[a]) - params.tau * v[a]);
                (spring + params.forcing(s, a)) / params.tau
            })
            .collect()
    };
    let mut x = params.start.clone();
    let mut v = vec![0.0; axes];
    let (mut pos, mut vel, mut acc) = (Vec::with_capacity(steps + 1), Vec::new(), Vec::new());
    for i in 0..=steps {
        let a = accel(&x, &v, params.phase(i as f64 * dt));
        pos.push(x.clone());
        vel.push(v.clone());
        acc.push(a.clone());
        if i == steps {
            break;
        }
        for k in 0..axes {
            v[k] += dt * a[k];
            x[k] += dt * v[k];
        }
        if x.iter().any(|p| !(p.abs() <= 1e6)) {
            return Err(Error::Numerical(alloc::format!(
                "rollout diverged at step {} (alpha {}, beta {}, tau {}, dt {})",
                i + 1,
                params.alpha,
                params.beta,
                params.tau,
                dt
            )));
        }
    }
    Trajectory::new(dt, pos, vel, acc)
}

/// Fits forcing weights to a demonstration by per-basis weighted means of
/// the target forcing. Start and goal are taken from the demo and the phase
/// clock is stretched to its duration.
pub fn learn_from_demo(demo: &Trajectory, skeleton: &DmpParams) -> Result<DmpParams> {
    let n = skeleton.n_basis();
    if demo.len() < n + 2 {
        return Err(Error::Usage(alloc::format!(
            "demo has {} samples, need at least {}",
            demo.len(),
            n + 2
        )));
    }
    if !(demo.duration() > 0.0) {
        return Err(Error::Usage("demo has zero duration".into()));
    }
    let axes = demo.axes();
    let mut p = DmpParams {
        tau_c: demo.duration(),
        start: demo.first().to_vec(),
        goal: demo.last().to_vec(),
        weights: vec![vec![0.0; n]; axes],
        ..skeleton.clone()
    };
    p.validate()?;
    let phases: Vec<f64> = (0..demo.len())
        .map(|i| p.phase(i as f64 * demo.dt()))
        .collect();
    for a in 0..axes {
        let target: Vec<f64> = (0..demo.len())
            .map(|i| {
                let (x, v, acc) = (demo.pos[i][a], demo.vel[i][a], demo.acc[i][a]);
                p.tau * acc - p.alpha * (p.beta * (p.goal[a] - x) - p.tau * v)
            })
            .collect();
        for i in 0..n {
            let (c, v) = (p.centers[i], p.sigma2[i]);
            let (mut num, mut den) = (0.0, 0.0);
            for (s, f) in phases.iter().zip(&target) {
                let psi = basis(*s, c, v);
                num += psi * f;
                den += psi;
            }
            p.weights[a][i] = if den > 1e-12 { num / den } else { 0.0 };
        }
    }
    Ok(p)
}
