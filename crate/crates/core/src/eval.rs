//! Inference-time combination of the two distributions and held-out
//! precision/recall evaluation.

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::distribution::RelationDistribution;
use crate::encoder::bag_distribution;
use crate::error::{Error, Result};
use crate::kb::Triple;
use crate::kbe::kb_relation_distribution;
use crate::linalg::argmax;
use crate::supervision::Bag;
use crate::training::ModelState;

/// Percent levels reported by default.
pub const DEFAULT_PERCENTS: [u32; 3] = [10, 30, 50];

/// `alpha * p_lang + (1 - alpha) * p_kb`, elementwise.
pub fn combine(p_lang: &RelationDistribution, p_kb: &RelationDistribution, alpha: f64) -> Result<RelationDistribution> {
    if p_lang.len() != p_kb.len() {
        return Err(Error::DimensionMismatch {
            expected: p_lang.len(),
            got: p_kb.len(),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    let probs = p_lang
        .probs
        .iter()
        .zip(&p_kb.probs)
        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
        .collect();
    Ok(RelationDistribution { probs })
}

/// Most probable relation, smallest id on ties.
pub fn predict(p: &RelationDistribution) -> usize {
    argmax(&p.probs)
}

/// Combined distribution of the model for one bag.
pub fn bag_combined(state: &ModelState, bag: &Bag, alpha: f64) -> Result<RelationDistribution> {
    let p_lang = bag_distribution(bag, &state.language);
    let p_kb = kb_relation_distribution(&state.knowledge, bag.head, bag.tail)?;
    combine(&p_lang, &p_kb, alpha)
}

/// Fraction of bags whose predicted relation equals the bag label.
pub fn bag_accuracy(state: &ModelState, bags: &[Bag], alpha: f64) -> Result<f64> {
    if bags.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for bag in bags {
        if predict(&bag_combined(state, bag, alpha)?) == bag.rel {
            hits += 1;
        }
    }
    Ok(hits as f64 / bags.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub pair: (usize, usize),
    pub relation: usize,
    pub confidence: f64,
    pub gold: bool,
}

/// Descending confidence, then ascending `(head, tail, relation)`.
pub fn ranking_order(a: &Prediction, b: &Prediction) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| (a.pair, a.relation).cmp(&(b.pair, b.relation)))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrCurve {
    /// `(recall, precision)` at k = 1..=n.
    pub points: Vec<(f64, f64)>,
}

impl PrCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("recall,precision\n");
        for (r, p) in &self.points {
            out.push_str(&format!("{r},{p}\n"));
        }
        out
    }
}

/// Curve over a ranked list of gold flags. Recall is relative to the number
/// of gold entries in the list; with none, recall is 0 throughout.
pub fn precision_recall(gold: &[bool]) -> PrCurve {
    let total = gold.iter().filter(|g| **g).count();
    let mut hits = 0usize;
    let points = gold
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            hits += g as usize;
            let recall = if total == 0 { 0.0 } else { hits as f64 / total as f64 };
            (recall, hits as f64 / (i + 1) as f64)
        })
        .collect();
    PrCurve { points }
}

/// Precision over the top `ceil(percent * n / 100)` entries (at least one).
pub fn precision_at_percent(curve: &PrCurve, percent: u32) -> Result<f64> {
    let n = curve.points.len();
    if n == 0 {
        return Err(Error::EmptyPredictions);
    }
    let k = ((percent as usize * n).div_ceil(100)).clamp(1, n);
    Ok(curve.points[k - 1].1)
}

pub fn p_at_csv(rows: &[(u32, f64)]) -> String {
    let mut out = String::from("percent,precision\n");
    for (n, p) in rows {
        out.push_str(&format!("{n},{p}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<Prediction>,
    pub curve: PrCurve,
    pub p_at: Vec<(u32, f64)>,
}

/// Ranks every non-NA relation of every test bag by combined probability and
/// scores the ranking against `kb_truth`.
pub fn evaluate(
    state: &ModelState,
    test_bags: &[Bag],
    kb_truth: &HashSet<Triple>,
    alpha: f64,
) -> Result<Evaluation> {
    let na = state.knowledge.num_relation_rows() - 1;
    let mut predictions = Vec::with_capacity(test_bags.len() * na);
    for bag in test_bags {
        let p = bag_combined(state, bag, alpha)?;
        for relation in 0..na {
            predictions.push(Prediction {
                pair: (bag.head, bag.tail),
                relation,
                confidence: p.probs[relation],
                gold: kb_truth.contains(&Triple::new(bag.head, relation, bag.tail)),
            });
        }
    }
    rank_predictions(predictions)
}

/// Sorts predictions and builds the curve and P@N table.
pub fn rank_predictions(mut predictions: Vec<Prediction>) -> Result<Evaluation> {
    if predictions.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    predictions.sort_by(ranking_order);
    let gold: Vec<bool> = predictions.iter().map(|p| p.gold).collect();
    let curve = precision_recall(&gold);
    let p_at = DEFAULT_PERCENTS
        .iter()
        .map(|&n| precision_at_percent(&curve, n).map(|p| (n, p)))
        .collect::<Result<_>>()?;
    Ok(Evaluation {
        predictions,
        curve,
        p_at,
    })
}
