//! Per-domain corpus statistics over the training split: vocabulary sizes
//! and average program length.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::gen::Corpus;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub instances: usize,
    pub utterance_vocab: usize,
    pub program_vocab: usize,
    pub avg_program_len: f64,
}

/// Statistics per domain, computed over the training split only.
pub fn corpus_stats(corpus: &Corpus) -> BTreeMap<String, DomainStats> {
    let mut utt_vocab: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut prog_vocab: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new(); // (instances, tokens)
    for domain in corpus.kbs.keys() {
        utt_vocab.insert(domain, BTreeSet::new());
        prog_vocab.insert(domain, BTreeSet::new());
        counts.insert(domain, (0, 0));
    }
    for inst in &corpus.train {
        let Some(utt) = utt_vocab.get_mut(inst.domain.as_str()) else {
            continue;
        };
        utt.extend(inst.utterance.iter().map(String::as_str));
        prog_vocab
            .get_mut(inst.domain.as_str())
            .expect("same keys as utt_vocab")
            .extend(inst.program.iter().map(String::as_str));
        let entry = counts.get_mut(inst.domain.as_str()).expect("same keys");
        entry.0 += 1;
        entry.1 += inst.program.len();
    }
    counts
        .into_iter()
        .map(|(domain, (instances, tokens))| {
            let stats = DomainStats {
                instances,
                utterance_vocab: utt_vocab[domain].len(),
                program_vocab: prog_vocab[domain].len(),
                avg_program_len: if instances == 0 {
                    0.0
                } else {
                    tokens as f64 / instances as f64
                },
            };
            (domain.to_string(), stats)
        })
        .collect()
}
