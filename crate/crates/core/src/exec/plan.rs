use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::data::{ClassVocabulary, TaskGrammar};
use crate::error::{dim_err, Error, Result};

/// Configured goal pose for every sub-task class.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalTable {
    goals: Vec<[f64; 3]>,
}

const STANDARD_GOALS: [(&str, [f64; 3]); 8] = [
    ("reach", [0.45, 0.10, 0.20]),
    ("pick", [0.50, 0.10, 0.05]),
    ("move", [0.40, -0.15, 0.25]),
    ("pour", [0.40, -0.20, 0.30]),
    ("give", [0.60, 0.00, 0.30]),
    ("place", [0.45, -0.25, 0.05]),
    ("wipe", [0.50, 0.20, 0.02]),
    ("retract", [0.20, 0.00, 0.35]),
];

impl GoalTable {
    pub fn new(goals: Vec<[f64; 3]>) -> Result<Self> {
        if goals.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Config("goal poses must be finite".into()));
        }
        Ok(Self { goals })
    }

    /// Fixed workspace poses for the standard classes; other classes get the
    /// retract pose.
    pub fn standard(vocab: &ClassVocabulary) -> Self {
        let fallback = STANDARD_GOALS[7].1;
        let goals = vocab
            .names()
            .iter()
            .map(|n| {
                STANDARD_GOALS
                    .iter()
                    .find(|(name, _)| name == n)
                    .map_or(fallback, |g| g.1)
            })
            .collect();
        Self { goals }
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn goal(&self, class: usize) -> Result<[f64; 3]> {
        self.goals.get(class).copied().ok_or_else(|| Error::Lookup {
            kind: "goal for class",
            name: class.to_string(),
        })
    }

    pub fn set(&mut self, class: usize, goal: [f64; 3]) -> Result<()> {
        let slot = self
            .goals
            .get_mut(class)
            .ok_or_else(|| dim_err!("no class {}", class))?;
        *slot = goal;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanStep {
    pub label: usize,
    pub goal: [f64; 3],
}

/// Primitive sequence for one recognised task.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitivePlan {
    pub task: String,
    pub steps: Vec<PlanStep>,
}

/// Maps a transcript to the grammar task with exactly that sequence.
///
/// Unmatched transcripts are rejected with the task at the smallest edit
/// distance.
pub fn plan_from_transcript(
    transcript: &[usize],
    grammar: &TaskGrammar,
    goals: &GoalTable,
) -> Result<PrimitivePlan> {
    if transcript.is_empty() {
        return Err(Error::Usage("empty transcript".into()));
    }
    let Some(task) = grammar.match_transcript(transcript) else {
        let (nearest, distance) = grammar.nearest(transcript);
        return Err(Error::Rejected {
            nearest: nearest.to_string(),
            distance,
        });
    };
    let steps = transcript
        .iter()
        .map(|&label| {
            Ok(PlanStep {
                label,
                goal: goals.goal(label)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PrimitivePlan {
        task: task.to_string(),
        steps,
    })
}
