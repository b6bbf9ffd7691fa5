//! Simulated execution: a DMP per sub-task brings the end effector near its
//! goal and a proportional servo loop finishes the alignment.

mod dmp;
mod plan;
mod servo;

use alloc::vec::Vec;

pub use dmp::{
    basis, basis_centers, basis_widths, forcing, learn_from_demo, min_jerk, phase, rollout,
    DmpParams, Trajectory,
};
pub use plan::{plan_from_transcript, GoalTable, PlanStep, PrimitivePlan};
pub use servo::{
    aligned, controller_step, predicted_steps, servo_until_aligned, ControllerConfig, ServoErrors,
    ServoReport,
};

use crate::error::Result;

/// One learned primitive per class, each fitted to a minimum-jerk demo from
/// the home pose to the class goal.
#[derive(Debug, Clone, PartialEq)]
pub struct DmpLibrary {
    pub duration: f64,
    pub dt: f64,
    primitives: Vec<DmpParams>,
}

impl DmpLibrary {
    pub fn learn(
        goals: &GoalTable,
        home: [f64; 3],
        n_basis: usize,
        duration: f64,
        dt: f64,
    ) -> Result<Self> {
        let mut primitives = Vec::with_capacity(goals.len());
        for c in 0..goals.len() {
            let goal = goals.goal(c)?;
            let demo = min_jerk(&home, &goal, duration, dt)?;
            let skeleton = DmpParams::skeleton(n_basis, &home, &goal, duration)?;
            primitives.push(learn_from_demo(&demo, &skeleton)?);
        }
        Ok(Self {
            duration,
            dt,
            primitives,
        })
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// The primitive for `class`, retargeted to move from `start` to `goal`.
    pub fn primitive(&self, class: usize, start: [f64; 3], goal: [f64; 3]) -> Result<DmpParams> {
        let base = self
            .primitives
            .get(class)
            .ok_or_else(|| crate::Error::Lookup {
                kind: "primitive for class",
                name: alloc::format!("{}", class),
            })?;
        Ok(DmpParams {
            start: start.to_vec(),
            goal: goal.to_vec(),
            ..base.clone()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub label: usize,
    pub trajectory: Trajectory,
    pub servo: ServoReport,
}

impl StepOutcome {
    pub fn success(&self) -> bool {
        self.servo.converged
    }
}

/// Executes `plan` from `home`: each step rolls out its primitive and then
/// servos until the end effector sits at the goal, i.e. the object, placed
/// `d_ref` ahead along x, is seen at the reference depth.
pub fn execute_plan(
    plan: &PrimitivePlan,
    library: &DmpLibrary,
    home: [f64; 3],
    controller: &ControllerConfig,
    max_servo_steps: usize,
) -> Result<Vec<StepOutcome>> {
    let mut pose = home;
    let mut out = Vec::with_capacity(plan.steps.len());
    for step in &plan.steps {
        let params = library.primitive(step.label, pose, step.goal)?;
        let trajectory = rollout(&params, library.dt, library.duration)?;
        let end = trajectory.last();
        let reached = [end[0], end[1], end[2]];
        let object = [step.goal[0] + controller.d_ref, step.goal[1], step.goal[2]];
        let servo = servo_until_aligned(reached, object, controller, library.dt, max_servo_steps)?;
        pose = servo.pose;
        out.push(StepOutcome {
            label: step.label,
            trajectory,
            servo,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClassVocabulary, TaskGrammar};

    #[test]
    fn plan_executes_to_goals() {
        let v = ClassVocabulary::standard();
        let g = TaskGrammar::standard(&v).unwrap();
        let goals = GoalTable::standard(&v);
        let lib = DmpLibrary::learn(&goals, [0.2, 0.0, 0.35], 20, 1.0, 1e-3).unwrap();
        let seq = g.sequence("pick&pour").unwrap().to_vec();
        let plan = plan_from_transcript(&seq, &g, &goals).unwrap();
        let out = execute_plan(
            &plan,
            &lib,
            [0.2, 0.0, 0.35],
            &ControllerConfig::default(),
            20_000,
        )
        .unwrap();
        assert_eq!(out.len(), 7);
        for (o, s) in out.iter().zip(&plan.steps) {
            assert!(o.success());
            for a in 0..3 {
                assert!((o.servo.pose[a] - s.goal[a]).abs() <= 1e-3 + 1e-12);
            }
        }
    }
}
