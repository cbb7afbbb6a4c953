//! Finite labeled state spaces.

use serde::{Deserialize, Serialize};

/// An ordered set of distinct labels. The position of a label is its index in
/// every table dimensioned by this space, so order is part of the identity of
/// the space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        Self {
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, ix: usize) -> &str {
        &self.labels[ix]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Labels that repeat or are empty. Empty result means the space is sound.
    pub fn defects(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.labels.is_empty() {
            out.push("space has no labels".to_string());
        }
        for (i, l) in self.labels.iter().enumerate() {
            if l.is_empty() {
                out.push(format!("label {i} is empty"));
            }
            if self.labels[..i].contains(l) {
                out.push(format!("label {l:?} appears more than once"));
            }
        }
        out
    }
}
