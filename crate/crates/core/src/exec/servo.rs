use crate::error::{Error, Result};

/// Proportional visual-servo gains, limits and tolerance bands.
///
/// Axis order is `(x, y, z)`; `x` points from the gripper camera to the
/// object, so the x error is the measured depth minus `d_ref`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub k_x: f64,
    pub k_pz: f64,
    pub d_ref: f64,
    pub v_max: [f64; 3],
    pub tolerance: [f64; 3],
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            k_x: 1.0,
            k_pz: 1.0,
            d_ref: 0.5,
            v_max: [0.25; 3],
            tolerance: [1e-3; 3],
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_x > 0.0 && self.k_pz > 0.0) {
            return Err(Error::Config("controller gains must be positive".into()));
        }
        if self.v_max.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("velocity limits must be positive".into()));
        }
        if self.tolerance.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Errors seen by the controller: measured depth and lateral offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoErrors {
    pub depth: f64,
    pub e_y: f64,
    pub e_z: f64,
}

impl ServoErrors {
    /// Errors of an end effector at `pose` looking at an object at `target`.
    pub fn between(pose: [f64; 3], target: [f64; 3]) -> Self {
        Self {
            depth: target[0] - pose[0],
            e_y: target[1] - pose[1],
            e_z: target[2] - pose[2],
        }
    }

    fn axes(&self, d_ref: f64) -> [f64; 3] {
        [self.depth - d_ref, self.e_y, self.e_z]
    }
}

/// Clamped proportional velocity command; axes inside their band get 0.
pub fn controller_step(errors: &ServoErrors, cfg: &ControllerConfig) -> [f64; 3] {
    let e = errors.axes(cfg.d_ref);
    let gains = [cfg.k_x, cfg.k_pz, cfg.k_pz];
    let mut v = [0.0; 3];
    for a in 0..3 {
        if e[a].abs() > cfg.tolerance[a] {
            v[a] = (gains[a] * e[a]).clamp(-cfg.v_max[a], cfg.v_max[a]);
        }
    }
    v
}

pub fn aligned(errors: &ServoErrors, cfg: &ControllerConfig) -> bool {
    errors
        .axes(cfg.d_ref)
        .iter()
        .zip(&cfg.tolerance)
        .all(|(e, t)| e.abs() <= *t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoReport {
    pub converged: bool,
    pub steps: usize,
    pub pose: [f64; 3],
}

/// Runs the controller on an ideal kinematic plant (pose += v·dt) until
/// every error lies in its band or `max_steps` commands have been issued.
pub fn servo_until_aligned(
    start: [f64; 3],
    target: [f64; 3],
    cfg: &ControllerConfig,
    dt: f64,
    max_steps: usize,
) -> Result<ServoReport> {
    cfg.validate()?;
    if !(dt > 0.0) {
        return Err(Error::Parameter(alloc::format!(
            "dt {} must be positive",
            dt
        )));
    }
    let mut pose = start;
    for step in 0..=max_steps {
        let e = ServoErrors::between(pose, target);
        if aligned(&e, cfg) {
            return Ok(ServoReport {
                converged: true,
                steps: step,
                pose,
            });
        }
        if step == max_steps {
            break;
        }
        let v = controller_step(&e, cfg);
        for a in 0..3 {
            pose[a] += v[a] * dt;
        }
    }
    Ok(ServoReport {
        converged: false,
        steps: max_steps,
        pose,
    })
}

/// Steps for `e_n = e_0·(1 − k·dt)^n` to reach `|e_n| ≤ tol`.
pub fn predicted_steps(e0: f64, gain: f64, dt: f64, tol: f64) -> usize {
    if e0.abs() <= tol {
        return 0;
    }
    libm::ceil(libm::log(tol / e0.abs()) / libm::log(1.0 - gain * dt)) as usize
}
