//! Relational knowledge bases: one entity type per domain, a flat property
//! schema, and single-valued properties per entity.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::LangError;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueKind {
    #[serde(rename = "number")]
    Number,
    #[serde(rename = "string")]
    Str,
    #[serde(rename = "entity-ref")]
    EntityRef,
}

/// A property value. Entity references are stored as their id string; the
/// schema's [`ValueKind`] says how to interpret it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Str(String),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            Value::Str(_) => None,
        }
    }
}

/// Formats a number the way program tokens and JSON artifacts spell it:
/// integers without a fractional part, everything else via the shortest
/// round-trip form.
pub fn format_number(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub domain_id: String,
    pub entity_type: String,
    pub properties: BTreeMap<String, ValueKind>,
    pub entities: BTreeMap<String, BTreeMap<String, Value>>,
}

impl KnowledgeBase {
    /// Checks the schema invariants: every entity defines exactly the schema
    /// properties, and stored values match their declared kinds.
    pub fn validate(&self) -> Result<(), LangError> {
        for (id, props) in &self.entities {
            for name in self.properties.keys() {
                if !props.contains_key(name) {
                    return Err(LangError::BadKb(format!(
                        "entity {id} missing property {name}"
                    )));
                }
            }
            for (name, value) in props {
                let Some(kind) = self.properties.get(name) else {
                    return Err(LangError::BadKb(format!(
                        "entity {id} has undeclared property {name}"
                    )));
                };
                let ok = match kind {
                    ValueKind::Number => matches!(value, Value::Number(n) if n.is_finite()),
                    ValueKind::Str | ValueKind::EntityRef => matches!(value, Value::Str(_)),
                };
                if !ok {
                    return Err(LangError::BadKb(format!(
                        "entity {id} property {name} does not match declared kind"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn property_kind(&self, name: &str) -> Option<ValueKind> {
        self.properties.get(name).copied()
    }

    pub fn value_of(&self, entity: &str, property: &str) -> Option<&Value> {
        self.entities.get(entity).and_then(|p| p.get(property))
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn save(&self, path: &Path) -> Result<(), LangError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| LangError::BadKb(format!("serialize {}: {e}", self.domain_id)))?;
        std::fs::write(path, text)
            .map_err(|e| LangError::BadKb(format!("write {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, LangError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LangError::BadKb(format!("read {}: {e}", path.display())))?;
        let kb: KnowledgeBase = serde_json::from_str(&text)
            .map_err(|e| LangError::BadKb(format!("parse {}: {e}", path.display())))?;
        kb.validate()?;
        Ok(kb)
    }
}

#[cfg(test)]
pub(crate) fn tiny_fixture() -> KnowledgeBase {
    use std::collections::BTreeMap;
    let mut properties = BTreeMap::new();
    properties.insert("cooking_time".to_string(), ValueKind::Number);
    properties.insert("cuisine".to_string(), ValueKind::Str);
    let mut entities = BTreeMap::new();
    for (id, time, cuisine) in [
        ("en.recipe.stew", 90.0, "irish"),
        ("en.recipe.toast", 5.0, "french"),
        ("en.recipe.soup", 30.0, "french"),
        ("en.recipe.cake", 90.0, "austrian"),
        ("en.recipe.salad", 10.0, "greek"),
    ] {
        let mut props = BTreeMap::new();
        props.insert("cooking_time".to_string(), Value::Number(time));
        props.insert("cuisine".to_string(), Value::Str(cuisine.to_string()));
        entities.insert(id.to_string(), props);
    }
    KnowledgeBase {
        domain_id: "recipes".to_string(),
        entity_type: "en.recipe".to_string(),
        properties,
        entities,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_validates() {
        tiny_fixture().validate().unwrap();
    }

    #[test]
    fn missing_property_is_rejected() {
        let mut kb = tiny_fixture();
        kb.entities
            .get_mut("en.recipe.stew")
            .unwrap()
            .remove("cuisine");
        assert!(matches!(kb.validate(), Err(LangError::BadKb(_))));
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let mut kb = tiny_fixture();
        kb.entities
            .get_mut("en.recipe.stew")
            .unwrap()
            .insert("cooking_time".to_string(), Value::Str("soon".into()));
        assert!(matches!(kb.validate(), Err(LangError::BadKb(_))));
    }

    #[test]
    fn json_round_trip_preserves_values() {
        let kb = tiny_fixture();
        let text = serde_json::to_string(&kb).unwrap();
        let back: KnowledgeBase = serde_json::from_str(&text).unwrap();
        assert_eq!(back.entities, kb.entities);
        assert_eq!(back.properties, kb.properties);
    }

    #[test]
    fn number_formatting_drops_trailing_zero_fraction() {
        assert_eq!(format_number(30.0), "30");
        assert_eq!(format_number(-4.0), "-4");
        assert_eq!(format_number(2.5), "2.5");
    }
}
