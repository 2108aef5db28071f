use crate::linalg::{argmax, softmax};

/// Probability vector over the relations of interest plus NA (NA last).
#[derive(Debug, Clone, PartialEq)]
pub struct RelationDistribution {
    pub probs: Vec<f64>,
}

impl RelationDistribution {
    pub fn from_logits(logits: &[f64]) -> Self {
        RelationDistribution {
            probs: softmax(logits),
        }
    }

    pub fn uniform(n: usize) -> Self {
        RelationDistribution {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Most probable relation, smallest id on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    /// Nonnegative entries summing to 1 within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        !self.probs.is_empty()
            && self.probs.iter().all(|p| p.is_finite() && *p >= 0.0)
            && (self.probs.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}
