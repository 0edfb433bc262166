//! Token vocabularies for the two sides of the parser.
//!
//! The program-side vocabulary is derived from knowledge-base schemas plus
//! the fixed structural token inventory — never from gold programs, which a
//! weakly supervised system does not get to see. The utterance-side
//! vocabulary comes from training utterances with an unknown-token fallback.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::lang::kb::{format_number, KnowledgeBase, Value, ValueKind};
use crate::lang::structural_tokens;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// Highest entity-placeholder index supported by generated data (e0..e3).
pub const MAX_PLACEHOLDERS: usize = 4;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    by_token: HashMap<String, u32>,
}

impl Vocab {
    /// Builds from an ordered token list; duplicates are a caller bug.
    pub fn new(tokens: Vec<String>) -> Self {
        let mut by_token = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            let prev = by_token.insert(t.clone(), i as u32);
            assert!(prev.is_none(), "duplicate vocabulary token {t}");
        }
        Vocab { tokens, by_token }
    }

    /// Utterance-side vocabulary: `<unk>` plus the sorted distinct words of
    /// the training utterances.
    pub fn source_from_utterances<'a, I>(utterances: I) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut words = BTreeSet::new();
        for utt in utterances {
            for w in utt {
                words.insert(w.clone());
            }
        }
        let mut tokens = vec![UNK.to_string()];
        tokens.extend(words.into_iter().filter(|w| w != UNK));
        Vocab::new(tokens)
    }

    /// Program-side vocabulary over one or more domains: sequence markers,
    /// the structural inventory, entity placeholders, then every
    /// schema-derived token (entity types, property names, and the distinct
    /// property values entities actually hold). Shared structural tokens get
    /// the same id no matter how many domains are combined.
    pub fn target_from_kbs<'a, I>(kbs: I) -> Self
    where
        I: IntoIterator<Item = &'a KnowledgeBase>,
    {
        let mut tokens: Vec<String> = vec![EOS.to_string(), BOS.to_string()];
        tokens.extend(structural_tokens().into_iter().map(str::to_string));
        for i in 0..MAX_PLACEHOLDERS {
            tokens.push(format!("e{i}"));
        }
        let mut derived = BTreeSet::new();
        for kb in kbs {
            derived.insert(kb.entity_type.clone());
            for (name, kind) in &kb.properties {
                derived.insert(name.clone());
                if *kind == ValueKind::EntityRef {
                    continue; // entity ids enter programs only as placeholders
                }
                for props in kb.entities.values() {
                    match &props[name] {
                        Value::Number(n) => {
                            derived.insert(format_number(*n));
                        }
                        Value::Str(s) => {
                            derived.insert(s.clone());
                        }
                    }
                }
            }
        }
        for t in derived {
            if !tokens.contains(&t) {
                tokens.push(t);
            }
        }
        Vocab::new(tokens)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.by_token.get(token).map(|&i| TokenId(i))
    }

    /// Id of `token`, falling back to `<unk>` (which must be present).
    pub fn id_or_unk(&self, token: &str) -> TokenId {
        self.id(token)
            .or_else(|| self.id(UNK))
            .expect("vocabulary without <unk> cannot encode unknown tokens")
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id.index()]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn bos(&self) -> Option<TokenId> {
        self.id(BOS)
    }

    pub fn eos(&self) -> Option<TokenId> {
        self.id(EOS)
    }

    pub fn encode_with_unk(&self, words: &[String]) -> Vec<TokenId> {
        words.iter().map(|w| self.id_or_unk(w)).collect()
    }

    /// Exact encoding; `None` if any token is out of vocabulary.
    pub fn encode_exact(&self, tokens: &[String]) -> Option<Vec<TokenId>> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// Hash of the ordered token list; stored in checkpoints so a model is
    /// never silently evaluated against a different vocabulary.
    pub fn sha256_hex(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
