//! Entity masking: swap entity mentions for `e0`, `e1`, … placeholders in an
//! utterance/program pair, with a map that makes the swap reversible.
//!
//! Masking is driven by the program: every KB entity id the program mentions
//! must have a surface mention in the utterance (the generator guarantees
//! this). Placeholders are numbered by first appearance in the utterance.

use std::collections::BTreeMap;

use crate::error::DataError;
use crate::lang::{is_placeholder, KnowledgeBase};
use crate::vocab::MAX_PLACEHOLDERS;

/// Words an entity contributes to an utterance: its id minus the type
/// prefix, with underscores read as spaces (`en.recipe.rice_pudding` →
/// `rice pudding`).
pub fn surface_words(kb: &KnowledgeBase, entity_id: &str) -> Result<Vec<String>, DataError> {
    let prefix = format!("{}.", kb.entity_type);
    let name = entity_id.strip_prefix(&prefix).ok_or_else(|| {
        DataError::Masking(format!(
            "entity `{entity_id}` does not belong to type `{}`",
            kb.entity_type
        ))
    })?;
    if name.is_empty() {
        return Err(DataError::Masking(format!("entity `{entity_id}` has an empty name")));
    }
    Ok(name.split('_').map(str::to_string).collect())
}

fn find_span(words: &[String], span: &[String]) -> Option<usize> {
    words.windows(span.len()).position(|w| w == span)
}

/// Replace entity mentions with placeholders in both the utterance and the
/// program. Returns the masked pair and the placeholder → entity-id map.
pub fn mask_entities(
    utterance: &[String],
    program: &[String],
    kb: &KnowledgeBase,
) -> Result<(Vec<String>, Vec<String>, BTreeMap<String, String>), DataError> {
    for tok in utterance.iter().chain(program) {
        if is_placeholder(tok) {
            return Err(DataError::Masking(format!(
                "input already contains the placeholder `{tok}`"
            )));
        }
    }

    // Distinct program entities with their surface spans and first positions.
    let mut mentions: Vec<(usize, String, Vec<String>)> = Vec::new();
    for tok in program {
        if !kb.entities.contains_key(tok) || mentions.iter().any(|(_, id, _)| id == tok) {
            continue;
        }
        let span = surface_words(kb, tok)?;
        let pos = find_span(utterance, &span).ok_or_else(|| {
            DataError::Masking(format!(
                "program mentions `{tok}` but the utterance never says `{}`",
                span.join(" ")
            ))
        })?;
        mentions.push((pos, tok.clone(), span));
    }
    mentions.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    if mentions.len() > MAX_PLACEHOLDERS {
        return Err(DataError::Masking(format!(
            "{} distinct entities exceed the {MAX_PLACEHOLDERS}-placeholder budget",
            mentions.len()
        )));
    }

    let mut entity_map = BTreeMap::new();
    let mut by_id: Vec<(String, String, Vec<String>)> = Vec::new(); // (placeholder, id, span)
    for (i, (_, id, span)) in mentions.into_iter().enumerate() {
        let ph = format!("e{i}");
        entity_map.insert(ph.clone(), id.clone());
        by_id.push((ph, id, span));
    }

    // Masked utterance: longest span wins where spans could nest.
    let mut order: Vec<usize> = (0..by_id.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(by_id[i].2.len()));
    let mut masked_utt = Vec::new();
    let mut at = 0usize;
    'outer: while at < utterance.len() {
        for &i in &order {
            let span = &by_id[i].2;
            if utterance[at..].starts_with(span.as_slice()) {
                masked_utt.push(by_id[i].0.clone());
                at += span.len();
                continue 'outer;
            }
        }
        masked_utt.push(utterance[at].clone());
        at += 1;
    }

    let masked_prog = program
        .iter()
        .map(|tok| {
            by_id
                .iter()
                .find(|(_, id, _)| id == tok)
                .map_or_else(|| tok.clone(), |(ph, _, _)| ph.clone())
        })
        .collect();

    Ok((masked_utt, masked_prog, entity_map))
}

/// Undo [`mask_entities`]: restore entity ids in the program and surface
/// words in the utterance.
pub fn unmask(
    utterance: &[String],
    program: &[String],
    entity_map: &BTreeMap<String, String>,
    kb: &KnowledgeBase,
) -> Result<(Vec<String>, Vec<String>), DataError> {
    let lookup = |ph: &str| {
        entity_map.get(ph).ok_or_else(|| {
            DataError::Masking(format!("placeholder `{ph}` is not in the entity map"))
        })
    };
    let mut out_utt = Vec::new();
    for w in utterance {
        if is_placeholder(w) {
            out_utt.extend(surface_words(kb, lookup(w)?)?);
        } else {
            out_utt.push(w.clone());
        }
    }
    let mut out_prog = Vec::new();
    for t in program {
        if is_placeholder(t) {
            out_prog.push(lookup(t)?.clone());
        } else {
            out_prog.push(t.clone());
        }
    }
    Ok((out_utt, out_prog))
}
