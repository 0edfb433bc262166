//! Program execution against a knowledge base, and the denotation type.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::LangError;
use crate::lang::expr::{Comparator, Expr, SuperlativeKind, ValueExpr};
use crate::lang::kb::{KnowledgeBase, Value, ValueKind};

/// One element of an answer set. Entity ids are plain strings: denotations
/// compare by the surface answers, the way answer sets are graded.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Atom {
    Number(f64),
    Str(String),
}

impl PartialEq for Atom {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Atom {}

impl PartialOrd for Atom {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Atom {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Atom::Number(a), Atom::Number(b)) => a.total_cmp(b),
            (Atom::Str(a), Atom::Str(b)) => a.cmp(b),
            (Atom::Number(_), Atom::Str(_)) => Ordering::Less,
            (Atom::Str(_), Atom::Number(_)) => Ordering::Greater,
        }
    }
}

/// The result of executing a program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values")]
pub enum Denotation {
    #[serde(rename = "entities")]
    Entities(BTreeSet<String>),
    #[serde(rename = "values")]
    Values(BTreeSet<Atom>),
    #[serde(rename = "count")]
    Count(u64),
}

impl Denotation {
    /// Canonical answer set: entity ids become string atoms, a count becomes
    /// a singleton number. All comparisons go through this form.
    pub fn canonical(&self) -> BTreeSet<Atom> {
        match self {
            Denotation::Entities(ids) => ids.iter().map(|id| Atom::Str(id.clone())).collect(),
            Denotation::Values(vs) => vs.clone(),
            Denotation::Count(n) => [Atom::Number(*n as f64)].into_iter().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Denotation::Entities(ids) => ids.is_empty(),
            Denotation::Values(vs) => vs.is_empty(),
            Denotation::Count(_) => false,
        }
    }
}

fn exec_err(msg: impl Into<String>) -> LangError {
    LangError::Exec(msg.into())
}

fn resolve_rhs(
    rhs: &ValueExpr,
    kb: &KnowledgeBase,
    entity_map: &BTreeMap<String, String>,
) -> Result<Value, LangError> {
    match rhs {
        ValueExpr::Number(n) => Ok(Value::Number(*n)),
        ValueExpr::Str(s) => Ok(Value::Str(s.clone())),
        ValueExpr::Placeholder(p) => {
            let id = entity_map
                .get(p)
                .ok_or_else(|| exec_err(format!("unbound placeholder {p}")))?;
            Ok(Value::Str(id.clone()))
        }
        ValueExpr::PlaceholderProperty {
            placeholder,
            property,
        } => {
            let id = entity_map
                .get(placeholder)
                .ok_or_else(|| exec_err(format!("unbound placeholder {placeholder}")))?;
            kb.property_kind(property)
                .ok_or_else(|| exec_err(format!("unknown property {property}")))?;
            let v = kb
                .value_of(id, property)
                .ok_or_else(|| exec_err(format!("unknown entity {id}")))?;
            Ok(v.clone())
        }
    }
}

fn compare(lhs: &Value, cmp: Comparator, rhs: &Value, kind: ValueKind) -> Result<bool, LangError> {
    if cmp.is_ordered() {
        if kind != ValueKind::Number {
            return Err(exec_err(format!(
                "ordered comparator {cmp} needs a number property"
            )));
        }
        let (a, b) = match (lhs.as_number(), rhs.as_number()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(exec_err("ordered comparison against a non-number value")),
        };
        return Ok(match cmp {
            Comparator::Lt => a < b,
            Comparator::Le => a <= b,
            Comparator::Gt => a > b,
            Comparator::Ge => a >= b,
            _ => unreachable!(),
        });
    }
    let equal = match (lhs, rhs) {
        (Value::Number(a), Value::Number(b)) => a == b,
        (Value::Str(a), Value::Str(b)) => a == b,
        _ => return Err(exec_err("equality comparison across value kinds")),
    };
    Ok(if cmp == Comparator::Eq { equal } else { !equal })
}

/// Entity set of a sub-expression; Values/Count sources are rejected.
fn entity_source(
    expr: &Expr,
    kb: &KnowledgeBase,
    entity_map: &BTreeMap<String, String>,
) -> Result<BTreeSet<String>, LangError> {
    match execute(expr, kb, entity_map)? {
        Denotation::Entities(ids) => Ok(ids),
        other => Err(exec_err(format!(
            "expected an entity set, got {}",
            match other {
                Denotation::Values(_) => "a value set",
                Denotation::Count(_) => "a count",
                Denotation::Entities(_) => unreachable!(),
            }
        ))),
    }
}

/// Executes `expr` against `kb`, resolving placeholders through
/// `entity_map`. Pure: identical inputs give identical denotations.
pub fn execute(
    expr: &Expr,
    kb: &KnowledgeBase,
    entity_map: &BTreeMap<String, String>,
) -> Result<Denotation, LangError> {
    match expr {
        Expr::TypeSet(t) => {
            if t != &kb.entity_type {
                return Err(exec_err(format!("unknown entity type {t}")));
            }
            Ok(Denotation::Entities(kb.entities.keys().cloned().collect()))
        }
        Expr::Filter {
            source,
            property,
            cmp,
            rhs,
        } => {
            let ids = entity_source(source, kb, entity_map)?;
            let kind = kb
                .property_kind(property)
                .ok_or_else(|| exec_err(format!("unknown property {property}")))?;
            let rhs = resolve_rhs(rhs, kb, entity_map)?;
            let mut out = BTreeSet::new();
            for id in ids {
                let v = kb
                    .value_of(&id, property)
                    .ok_or_else(|| exec_err(format!("unknown entity {id}")))?;
                if compare(v, *cmp, &rhs, kind)? {
                    out.insert(id);
                }
            }
            Ok(Denotation::Entities(out))
        }
        Expr::Superlative {
            source,
            kind,
            property,
        } => {
            let ids = entity_source(source, kb, entity_map)?;
            if kb.property_kind(property) != Some(ValueKind::Number) {
                return Err(exec_err(format!(
                    "superlative over non-number property {property}"
                )));
            }
            let mut best: Option<f64> = None;
            for id in &ids {
                let v = kb
                    .value_of(id, property)
                    .and_then(Value::as_number)
                    .ok_or_else(|| exec_err(format!("missing number on entity {id}")))?;
                best = Some(match (best, kind) {
                    (None, _) => v,
                    (Some(b), SuperlativeKind::ArgMax) => b.max(v),
                    (Some(b), SuperlativeKind::ArgMin) => b.min(v),
                });
            }
            let mut out = BTreeSet::new();
            if let Some(best) = best {
                for id in ids {
                    let v = kb.value_of(&id, property).and_then(Value::as_number);
                    if v == Some(best) {
                        out.insert(id);
                    }
                }
            }
            Ok(Denotation::Entities(out))
        }
        Expr::GetProperty { source, property } => {
            let ids = entity_source(source, kb, entity_map)?;
            kb.property_kind(property)
                .ok_or_else(|| exec_err(format!("unknown property {property}")))?;
            let mut out = BTreeSet::new();
            for id in ids {
                let v = kb
                    .value_of(&id, property)
                    .ok_or_else(|| exec_err(format!("unknown entity {id}")))?;
                out.insert(match v {
                    Value::Number(n) => Atom::Number(*n),
                    Value::Str(s) => Atom::Str(s.clone()),
                });
            }
            Ok(Denotation::Values(out))
        }
        Expr::Count(source) => {
            let n = match execute(source, kb, entity_map)? {
                Denotation::Entities(ids) => ids.len(),
                Denotation::Values(vs) => vs.len(),
                Denotation::Count(_) => {
                    return Err(exec_err("count of a count has no set to measure"))
                }
            };
            Ok(Denotation::Count(n as u64))
        }
    }
}
