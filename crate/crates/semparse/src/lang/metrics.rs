//! Denotation-comparison metrics: the reward functions and accuracies.

use crate::lang::exec::Denotation;

/// Exact answer-set match. Counts compare as singleton number sets.
pub fn hard_match(predicted: &Denotation, gold: &Denotation) -> bool {
    predicted.canonical() == gold.canonical()
}

/// F1 overlap between answer sets in [0,1]. Two empty sets count as a
/// perfect answer; exactly one empty set scores zero.
pub fn soft_f1(predicted: &Denotation, gold: &Denotation) -> f64 {
    let p = predicted.canonical();
    let g = gold.canonical();
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        (false, false) => {}
    }
    let overlap = p.intersection(&g).count() as f64;
    if overlap == 0.0 {
        return 0.0;
    }
    let precision = overlap / p.len() as f64;
    let recall = overlap / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Exact token-sequence match after stripping a trailing end-of-sequence
/// token from either side. A fast proxy reward; syntactically different but
/// semantically equivalent programs score 0.
pub fn string_match_reward(predicted: &[String], gold: &[String], eos: &str) -> f64 {
    let strip = |toks: &[String]| -> usize {
        match toks.last() {
            Some(t) if t == eos => toks.len() - 1,
            _ => toks.len(),
        }
    };
    let (np, ng) = (strip(predicted), strip(gold));
    if np == ng && predicted[..np] == gold[..ng] {
        1.0
    } else {
        0.0
    }
}
