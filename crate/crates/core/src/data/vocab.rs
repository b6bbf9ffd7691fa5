use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::loss::TransitionMatrix;
use crate::metrics::levenshtein;

/// Ordered class names; the position is the class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassVocabulary {
    names: Vec<String>,
}

pub const STANDARD_CLASSES: [&str; 8] = [
    "reach", "pick", "move", "pour", "give", "place", "wipe", "retract",
];

impl ClassVocabulary {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.chars().any(char::is_whitespace) {
                return Err(Error::Config(alloc::format!("invalid class name {:?}", n)));
            }
            if names[..i].contains(n) {
                return Err(Error::Config(alloc::format!(
                    "duplicate class name {:?}",
                    n
                )));
            }
        }
        Ok(Self { names })
    }

    pub fn standard() -> Self {
        Self::new(&STANDARD_CLASSES).expect("distinct names")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: usize) -> Result<&str> {
        self.names
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::Lookup {
                kind: "class id",
                name: id.to_string(),
            })
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Lookup {
                kind: "class",
                name: name.to_string(),
            })
    }
}

/// Task name to ordered sub-task sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskGrammar {
    tasks: Vec<(String, Vec<usize>)>,
}

pub const STANDARD_TASKS: [(&str, &[&str]); 4] = [
    ("pick&place", &["reach", "pick", "move", "place", "retract"]),
    (
        "pick&pour",
        &["reach", "pick", "move", "pour", "move", "place", "retract"],
    ),
    ("cleaning", &["reach", "wipe", "retract"]),
    ("pick&give", &["reach", "pick", "give", "retract"]),
];

impl TaskGrammar {
    pub fn new(vocab: &ClassVocabulary, tasks: &[(&str, &[&str])]) -> Result<Self> {
        let mut out: Vec<(String, Vec<usize>)> = Vec::with_capacity(tasks.len());
        for &(name, seq) in tasks {
            if seq.is_empty() {
                return Err(Error::Config(alloc::format!(
                    "task {} has no sub-tasks",
                    name
                )));
            }
            if out.iter().any(|(n, _)| n == name) {
                return Err(Error::Config(alloc::format!("duplicate task {}", name)));
            }
            let ids = seq
                .iter()
                .map(|s| vocab.id(s))
                .collect::<Result<Vec<_>>>()?;
            out.push((name.to_string(), ids));
        }
        if out.is_empty() {
            return Err(Error::Config("grammar has no tasks".into()));
        }
        Ok(Self { tasks: out })
    }

    pub fn standard(vocab: &ClassVocabulary) -> Result<Self> {
        Self::new(vocab, &STANDARD_TASKS)
    }

    pub fn tasks(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.tasks.iter().map(|(n, s)| (n.as_str(), s.as_slice()))
    }

    pub fn task_names(&self) -> Vec<&str> {
        self.tasks.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn sequence(&self, task: &str) -> Result<&[usize]> {
        self.tasks
            .iter()
            .find(|(n, _)| n == task)
            .map(|(_, s)| s.as_slice())
            .ok_or_else(|| Error::Lookup {
                kind: "task",
                name: task.to_string(),
            })
    }

    /// Task whose sequence equals `transcript` exactly.
    pub fn match_transcript(&self, transcript: &[usize]) -> Option<&str> {
        self.tasks
            .iter()
            .find(|(_, s)| s == transcript)
            .map(|(n, _)| n.as_str())
    }

    /// Task with the smallest transcript edit distance; the first on ties.
    pub fn nearest(&self, transcript: &[usize]) -> (&str, usize) {
        self.tasks
            .iter()
            .map(|(n, s)| (n.as_str(), levenshtein(s, transcript)))
            .min_by_key(|&(_, d)| d)
            .expect("grammar is nonempty")
    }

    pub fn transition_matrix(&self, classes: usize) -> TransitionMatrix {
        TransitionMatrix::from_sequences(classes, self.tasks.iter().map(|(_, s)| s.as_slice()))
    }
}
