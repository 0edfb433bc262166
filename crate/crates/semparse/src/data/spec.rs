//! Domain specifications: what a synthetic domain looks like and how its
//! utterance/program templates are written, plus the bundled default of
//! three domains that share program structure but not wording.
//!
//! Template patterns are whitespace-tokenized; a token of the form `{…}` is
//! a slot:
//!
//! * `{e0}`, `{e1}` — a sampled KB entity: surface name in the utterance,
//!   entity id in the program;
//! * `{n:prop}` — a number drawn from the KB's actual values of `prop`;
//! * `{s:prop}` — a string drawn likewise;
//! * `{p:prop}` — the property's surface wording (utterance only);
//! * `{c:key}` — one of the domain's phrasings for a shared construct
//!   (utterance only).
//!
//! Slots with the same spelling bind to one sampled value across both
//! patterns, so the program mentions exactly what the utterance says.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::lang::{format_number, parse_program_str, ValueKind};
use crate::vocab::MAX_PLACEHOLDERS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumberRange {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl NumberRange {
    /// Every representable value, lo, lo+step, … up to hi.
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut i = 0u64;
        loop {
            let v = self.lo + self.step * i as f64;
            if v > self.hi + self.step * 1e-9 {
                break;
            }
            out.push(v);
            i += 1;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub name: String,
    pub kind: ValueKind,
    /// How the property is worded in utterances (`{p:name}`).
    pub surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub number_range: Option<NumberRange>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub string_values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub name: String,
    /// Utterance pattern with slots.
    pub surface: String,
    /// Program pattern with slots, in the program language's token syntax.
    pub program: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub domain_id: String,
    pub entity_type: String,
    /// Surface names entities are drawn from; ids join the words with `_`.
    pub entity_names: Vec<String>,
    /// How many entities the generated KB holds.
    pub kb_size: usize,
    pub properties: Vec<PropertySpec>,
    pub templates: Vec<TemplateSpec>,
    /// Shared program construct → this domain's surface phrasings.
    pub phrasings: BTreeMap<String, Vec<String>>,
}

/// One parsed template slot.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Slot {
    Entity(usize),
    Number(String),
    Str(String),
    PropSurface(String),
    Phrase(String),
}

/// `Ok(None)` for a literal token, `Ok(Some(slot))` for a well-formed slot.
pub(crate) fn parse_slot(tok: &str) -> Result<Option<Slot>, DataError> {
    if !tok.starts_with('{') {
        return Ok(None);
    }
    let bad = |msg: &str| Err(DataError::BadSpec(format!("slot `{tok}`: {msg}")));
    let Some(body) = tok.strip_prefix('{').and_then(|t| t.strip_suffix('}')) else {
        return bad("missing closing brace");
    };
    if let Some(idx) = body.strip_prefix('e') {
        if let Ok(i) = idx.parse::<usize>() {
            return Ok(Some(Slot::Entity(i)));
        }
    }
    let Some((prefix, arg)) = body.split_once(':') else {
        return bad("expected `e<index>` or `<kind>:<name>`");
    };
    if arg.is_empty() {
        return bad("empty name");
    }
    let arg = arg.to_string();
    match prefix {
        "n" => Ok(Some(Slot::Number(arg))),
        "s" => Ok(Some(Slot::Str(arg))),
        "p" => Ok(Some(Slot::PropSurface(arg))),
        "c" => Ok(Some(Slot::Phrase(arg))),
        _ => bad("unknown slot kind"),
    }
}

pub(crate) fn pattern_slots(pattern: &str) -> Result<Vec<Slot>, DataError> {
    let mut out = Vec::new();
    for tok in pattern.split_whitespace() {
        if let Some(slot) = parse_slot(tok)? {
            out.push(slot);
        }
    }
    Ok(out)
}

/// Words of `needle` appearing contiguously inside `haystack`.
fn is_subspan(needle: &[&str], haystack: &[&str]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

impl DomainSpec {
    pub fn property(&self, name: &str) -> Option<&PropertySpec> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |msg: String| Err(DataError::BadSpec(format!("{}: {msg}", self.domain_id)));
        if self.domain_id.is_empty() || self.entity_type.is_empty() {
            return fail("domain_id and entity_type must be non-empty".to_string());
        }
        if self.kb_size < 2 {
            return fail("kb_size must be at least 2".to_string());
        }
        if self.kb_size > self.entity_names.len() {
            return fail(format!(
                "kb_size {} exceeds the {} available entity names",
                self.kb_size,
                self.entity_names.len()
            ));
        }

        let mut seen_names = BTreeSet::new();
        for name in &self.entity_names {
            if name.is_empty() || !seen_names.insert(name.as_str()) {
                return fail(format!("entity name `{name}` is empty or repeated"));
            }
            if name.contains(['_', '.', '{', '}']) {
                return fail(format!("entity name `{name}` contains a reserved character"));
            }
        }
        // No entity's surface words may appear contiguously inside another's,
        // or masking spans would be ambiguous.
        let split: Vec<Vec<&str>> = self
            .entity_names
            .iter()
            .map(|n| n.split_whitespace().collect())
            .collect();
        for (i, a) in split.iter().enumerate() {
            for (j, b) in split.iter().enumerate() {
                if i != j && is_subspan(a, b) {
                    return fail(format!(
                        "entity name `{}` appears inside `{}`",
                        self.entity_names[i], self.entity_names[j]
                    ));
                }
            }
        }

        let mut seen_props = BTreeSet::new();
        for prop in &self.properties {
            if prop.name.is_empty() || !seen_props.insert(prop.name.as_str()) {
                return fail(format!("property `{}` is empty or repeated", prop.name));
            }
            match prop.kind {
                ValueKind::Number => {
                    let Some(range) = &prop.number_range else {
                        return fail(format!("number property `{}` needs a range", prop.name));
                    };
                    if !(range.step > 0.0) || range.lo > range.hi {
                        return fail(format!("property `{}` has a bad range", prop.name));
                    }
                    if range.values().len() < self.kb_size {
                        return fail(format!(
                            "property `{}` offers {} values for {} entities; values are \
                             sampled without replacement",
                            prop.name,
                            range.values().len(),
                            self.kb_size
                        ));
                    }
                }
                ValueKind::Str => {
                    if prop.string_values.is_empty() {
                        return fail(format!("string property `{}` needs values", prop.name));
                    }
                    let distinct: BTreeSet<_> = prop.string_values.iter().collect();
                    if distinct.len() != prop.string_values.len() {
                        return fail(format!("property `{}` repeats a value", prop.name));
                    }
                }
                ValueKind::EntityRef => {
                    return fail(format!(
                        "property `{}`: the generator does not sample entity-ref properties",
                        prop.name
                    ));
                }
            }
        }

        for (key, phrases) in &self.phrasings {
            if phrases.is_empty() || phrases.iter().any(|p| p.trim().is_empty()) {
                return fail(format!("phrasing `{key}` has an empty entry"));
            }
        }

        let mut seen_templates = BTreeSet::new();
        for template in &self.templates {
            self.validate_template(template)?;
            if !seen_templates.insert(template.name.as_str()) {
                return fail(format!("template `{}` is repeated", template.name));
            }
        }
        Ok(())
    }

    fn validate_template(&self, template: &TemplateSpec) -> Result<(), DataError> {
        let fail = |msg: String| {
            Err(DataError::BadSpec(format!(
                "{}: template `{}`: {msg}",
                self.domain_id, template.name
            )))
        };
        let surface = pattern_slots(&template.surface)?;
        let program = pattern_slots(&template.program)?;

        let mut entity_indices = BTreeSet::new();
        for slot in surface.iter().chain(&program) {
            match slot {
                Slot::Entity(i) => {
                    entity_indices.insert(*i);
                }
                Slot::Number(p) => {
                    if self.property(p).map(|s| s.kind) != Some(ValueKind::Number) {
                        return fail(format!("`{{n:{p}}}` does not name a number property"));
                    }
                }
                Slot::Str(p) => {
                    if self.property(p).map(|s| s.kind) != Some(ValueKind::Str) {
                        return fail(format!("`{{s:{p}}}` does not name a string property"));
                    }
                }
                Slot::PropSurface(p) => {
                    if self.property(p).is_none() {
                        return fail(format!("`{{p:{p}}}` does not name a property"));
                    }
                }
                Slot::Phrase(key) => {
                    if !self.phrasings.contains_key(key) {
                        return fail(format!("`{{c:{key}}}` has no phrasing list"));
                    }
                }
            }
        }
        if entity_indices.len() > MAX_PLACEHOLDERS {
            return fail(format!("more than {MAX_PLACEHOLDERS} entity slots"));
        }
        if !entity_indices.is_empty()
            && (*entity_indices.iter().next_back().unwrap() != entity_indices.len() - 1)
        {
            return fail("entity slot indices must be contiguous from 0".to_string());
        }

        // The program side may not use surface-only slots, and everything it
        // samples must also be said in the utterance.
        let surface_set: BTreeSet<_> = surface.iter().collect();
        for slot in &program {
            match slot {
                Slot::PropSurface(_) | Slot::Phrase(_) => {
                    return fail("program patterns may only use {e}/{n:}/{s:} slots".to_string());
                }
                _ => {}
            }
            if !surface_set.contains(slot) {
                return fail(format!("program slot {slot:?} is missing from the surface"));
            }
        }

        // A dummy instantiation must parse: placeholders for entities, an
        // arbitrary in-range value for the rest.
        let dummy: Vec<String> = template
            .program
            .split_whitespace()
            .map(|tok| {
                Ok(match parse_slot(tok)? {
                    None => tok.to_string(),
                    Some(Slot::Entity(i)) => format!("e{i}"),
                    Some(Slot::Number(p)) => {
                        let range = self.property(&p).and_then(|s| s.number_range.as_ref());
                        format_number(range.map_or(0.0, |r| r.lo))
                    }
                    Some(Slot::Str(p)) => self
                        .property(&p)
                        .and_then(|s| s.string_values.first())
                        .cloned()
                        .unwrap_or_default(),
                    Some(_) => unreachable!("rejected above"),
                })
            })
            .collect::<Result<_, DataError>>()?;
        parse_program_str(&dummy.join(" ")).map_err(|source| DataError::BadTemplate {
            template: format!("{}/{}", self.domain_id, template.name),
            source,
        })?;
        Ok(())
    }
}

/// Bundle-level checks on top of per-domain validation.
pub fn validate_bundle(specs: &[DomainSpec]) -> Result<(), DataError> {
    if specs.is_empty() {
        return Err(DataError::BadSpec("the bundle has no domains".to_string()));
    }
    let mut ids = BTreeSet::new();
    let mut types = BTreeSet::new();
    for spec in specs {
        spec.validate()?;
        if !ids.insert(spec.domain_id.as_str()) {
            return Err(DataError::BadSpec(format!(
                "domain id `{}` is repeated",
                spec.domain_id
            )));
        }
        if !types.insert(spec.entity_type.as_str()) {
            return Err(DataError::BadSpec(format!(
                "entity type `{}` is repeated",
                spec.entity_type
            )));
        }
    }
    Ok(())
}

pub fn save_bundle(specs: &[DomainSpec], path: &Path) -> Result<(), DataError> {
    let json = serde_json::to_string_pretty(specs)
        .map_err(|e| DataError::Io(format!("encoding bundle: {e}")))?;
    fs::write(path, json).map_err(|e| DataError::Io(format!("writing {}: {e}", path.display())))
}

pub fn load_bundle(path: &Path) -> Result<Vec<DomainSpec>, DataError> {
    let json = fs::read_to_string(path)
        .map_err(|e| DataError::Io(format!("reading {}: {e}", path.display())))?;
    let specs: Vec<DomainSpec> = serde_json::from_str(&json)
        .map_err(|e| DataError::Io(format!("decoding {}: {e}", path.display())))?;
    validate_bundle(&specs)?;
    Ok(specs)
}

fn prop_num(name: &str, surface: &str, lo: f64, hi: f64, step: f64) -> PropertySpec {
    PropertySpec {
        name: name.to_string(),
        kind: ValueKind::Number,
        surface: surface.to_string(),
        number_range: Some(NumberRange { lo, hi, step }),
        string_values: Vec::new(),
    }
}

fn prop_str(name: &str, surface: &str, values: &[&str]) -> PropertySpec {
    PropertySpec {
        name: name.to_string(),
        kind: ValueKind::Str,
        surface: surface.to_string(),
        number_range: None,
        string_values: values.iter().map(|v| v.to_string()).collect(),
    }
}

fn tpl(name: &str, surface: &str, program: &str) -> TemplateSpec {
    TemplateSpec {
        name: name.to_string(),
        surface: surface.to_string(),
        program: program.to_string(),
    }
}

fn phrasings(entries: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
    entries
        .iter()
        .map(|(k, vs)| (k.to_string(), vs.iter().map(|v| v.to_string()).collect()))
        .collect()
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|n| n.to_string()).collect()
}

/// Three domains with parallel template structure and deliberately disjoint
/// wording for the shared constructs (superlatives, ≥/≤ comparisons,
/// counting), so structural knowledge is the only thing they have in common.
pub fn default_bundle() -> Vec<DomainSpec> {
    let recipes = DomainSpec {
        domain_id: "recipes".to_string(),
        entity_type: "en.recipe".to_string(),
        entity_names: names(&[
            "stew", "toast", "curry", "pie", "pasta", "omelette", "pancakes", "waffles",
            "brownies", "lasagna", "risotto", "chili", "tacos", "burger", "sushi", "ramen",
            "paella", "goulash", "fondue", "kebab", "chowder", "flan", "rice pudding",
            "apple strudel",
        ]),
        kb_size: 20,
        properties: vec![
            prop_num("cooking_time", "cooking time", 5.0, 120.0, 5.0),
            prop_num("posting_date", "posting date", 1990.0, 2015.0, 1.0),
            prop_str(
                "cuisine",
                "cuisine",
                &["french", "italian", "thai", "mexican", "greek", "indian"],
            ),
        ],
        templates: vec![
            tpl("list_all", "{c:show} all {c:noun}", "en.recipe"),
            tpl("count_all", "{c:count} {c:noun} are there", "count en.recipe"),
            tpl(
                "filter_str_eq",
                "{c:which} {c:noun} are {s:cuisine} {p:cuisine}",
                "filter en.recipe cuisine = {s:cuisine}",
            ),
            tpl(
                "filter_str_ne",
                "{c:which} {c:noun} are not {s:cuisine} {p:cuisine}",
                "filter en.recipe cuisine != {s:cuisine}",
            ),
            tpl(
                "filter_num_ge",
                "{c:which} {c:noun} take {c:at_least} {n:cooking_time} minutes",
                "filter en.recipe cooking_time >= {n:cooking_time}",
            ),
            tpl(
                "filter_num_le",
                "{c:which} {c:noun} take {c:at_most} {n:cooking_time} minutes",
                "filter en.recipe cooking_time <= {n:cooking_time}",
            ),
            tpl(
                "count_filter",
                "{c:count} {c:noun} are {s:cuisine} {p:cuisine}",
                "count filter en.recipe cuisine = {s:cuisine}",
            ),
            tpl(
                "argmax",
                "{c:which} {c:noun} has the {c:argmax} {p:cooking_time}",
                "argmax en.recipe cooking_time",
            ),
            tpl(
                "argmin",
                "{c:which} {c:noun} has the {c:argmin} {p:cooking_time}",
                "argmin en.recipe cooking_time",
            ),
            tpl(
                "rel_num_ge",
                "{c:which} {c:noun} {p:posting_date} is {c:at_least} the same as {e0}",
                "filter en.recipe posting_date >= ( getProperty {e0} posting_date )",
            ),
            tpl(
                "same_str",
                "{c:which} {c:noun} have the same {p:cuisine} as {e0}",
                "filter en.recipe cuisine = ( getProperty {e0} cuisine )",
            ),
            tpl(
                "argmax_filtered",
                "{c:which} {s:cuisine} {c:noun} has the {c:argmax} {p:cooking_time}",
                "argmax filter en.recipe cuisine = {s:cuisine} cooking_time",
            ),
            tpl(
                "values_of_filter",
                "what are the {p:cooking_time} values of {s:cuisine} {c:noun}",
                "getProperty filter en.recipe cuisine = {s:cuisine} cooking_time",
            ),
            tpl(
                "value_of_argmax",
                "what {p:cuisine} does the {c:argmax} {p:cooking_time} {c:noun} have",
                "getProperty argmax en.recipe cooking_time cuisine",
            ),
            tpl(
                "two_entity_window",
                "{c:which} {c:noun} take {c:at_least} as long as {e0} and have {p:posting_date} \
                 {c:at_most} that of {e1}",
                "filter filter en.recipe cooking_time >= ( getProperty {e0} cooking_time ) \
                 posting_date <= ( getProperty {e1} posting_date )",
            ),
        ],
        phrasings: phrasings(&[
            ("noun", &["recipes", "dishes"]),
            ("show", &["show", "list"]),
            ("which", &["which", "what"]),
            ("count", &["how many", "what number of"]),
            ("at_least", &["at least", "a minimum of"]),
            ("at_most", &["at most", "a maximum of"]),
            ("argmax", &["highest", "longest"]),
            ("argmin", &["quickest", "shortest"]),
        ]),
    };

    let publications = DomainSpec {
        domain_id: "publications".to_string(),
        entity_type: "en.article".to_string(),
        entity_names: names(&[
            "survey", "review", "thesis", "manifesto", "retrospective", "primer", "critique",
            "digest", "monograph", "treatise", "compendium", "almanac", "anthology", "bulletin",
            "gazette", "chronicle", "ledger", "memoir", "pamphlet", "proceedings", "errata",
            "addendum", "field guide", "white paper",
        ]),
        kb_size: 20,
        properties: vec![
            prop_num("citation_count", "citation count", 0.0, 200.0, 4.0),
            prop_num("publication_year", "publication year", 1980.0, 2015.0, 1.0),
            prop_str(
                "venue",
                "venue",
                &["journal", "conference", "workshop", "symposium", "preprint"],
            ),
        ],
        templates: vec![
            tpl("list_all", "{c:show} all {c:noun}", "en.article"),
            tpl("count_all", "what is {c:count} {c:noun}", "count en.article"),
            tpl(
                "filter_str_eq",
                "{c:which} {c:noun} appeared in a {s:venue}",
                "filter en.article venue = {s:venue}",
            ),
            tpl(
                "filter_str_ne",
                "{c:which} {c:noun} did not appear in a {s:venue}",
                "filter en.article venue != {s:venue}",
            ),
            tpl(
                "filter_num_ge",
                "{c:which} {c:noun} have {c:at_least} {n:citation_count} citations",
                "filter en.article citation_count >= {n:citation_count}",
            ),
            tpl(
                "filter_num_le",
                "{c:which} {c:noun} have {c:at_most} {n:citation_count} citations",
                "filter en.article citation_count <= {n:citation_count}",
            ),
            tpl(
                "count_filter",
                "what is {c:count} {c:noun} in a {s:venue}",
                "count filter en.article venue = {s:venue}",
            ),
            tpl(
                "argmax",
                "{c:which} {c:noun} has the {c:argmax} {p:citation_count}",
                "argmax en.article citation_count",
            ),
            tpl(
                "argmin",
                "{c:which} {c:noun} has the {c:argmin} {p:citation_count}",
                "argmin en.article citation_count",
            ),
            tpl(
                "rel_num_ge",
                "{c:which} {c:noun} {p:publication_year} is {c:at_least} the same as {e0}",
                "filter en.article publication_year >= ( getProperty {e0} publication_year )",
            ),
            tpl(
                "same_str",
                "{c:which} {c:noun} share the {p:venue} of {e0}",
                "filter en.article venue = ( getProperty {e0} venue )",
            ),
            tpl(
                "argmax_filtered",
                "{c:which} {s:venue} {c:noun} has the {c:argmax} {p:citation_count}",
                "argmax filter en.article venue = {s:venue} citation_count",
            ),
            tpl(
                "values_of_filter",
                "what are the {p:citation_count} values of {s:venue} {c:noun}",
                "getProperty filter en.article venue = {s:venue} citation_count",
            ),
            tpl(
                "value_of_argmax",
                "what {p:venue} does the {c:argmax} {p:citation_count} {c:noun} have",
                "getProperty argmax en.article citation_count venue",
            ),
            tpl(
                "two_entity_window",
                "{c:which} {c:noun} have citations {c:at_least} that of {e0} and \
                 {p:publication_year} {c:at_most} that of {e1}",
                "filter filter en.article citation_count >= ( getProperty {e0} citation_count ) \
                 publication_year <= ( getProperty {e1} publication_year )",
            ),
        ],
        phrasings: phrasings(&[
            ("noun", &["articles", "papers"]),
            ("show", &["display", "retrieve"]),
            ("which", &["which", "what"]),
            ("count", &["the number of", "the tally of"]),
            ("at_least", &["no less than", "not under"]),
            ("at_most", &["no more than", "not over"]),
            ("argmax", &["greatest", "top"]),
            ("argmin", &["fewest", "least"]),
        ]),
    };

    let housing = DomainSpec {
        domain_id: "housing".to_string(),
        entity_type: "en.listing".to_string(),
        entity_names: names(&[
            "bungalow", "loft", "penthouse", "studio", "cottage", "townhouse", "duplex",
            "villa", "cabin", "chalet", "flat", "mansion", "farmhouse", "houseboat", "yurt",
            "condo", "rowhouse", "brownstone", "attic", "basement", "treehouse", "lighthouse",
            "garden apartment", "corner unit",
        ]),
        kb_size: 20,
        properties: vec![
            prop_num("monthly_rent", "monthly rent", 500.0, 3000.0, 50.0),
            prop_num("size", "size", 20.0, 200.0, 5.0),
            prop_str(
                "neighborhood",
                "neighborhood",
                &["downtown", "riverside", "uptown", "harbor", "midtown", "suburbs"],
            ),
        ],
        templates: vec![
            tpl("list_all", "{c:show} all {c:noun}", "en.listing"),
            tpl(
                "count_all",
                "{c:count} {c:noun} on the market",
                "count en.listing",
            ),
            tpl(
                "filter_str_eq",
                "{c:which} {c:noun} are in the {s:neighborhood} {p:neighborhood}",
                "filter en.listing neighborhood = {s:neighborhood}",
            ),
            tpl(
                "filter_str_ne",
                "{c:which} {c:noun} are outside the {s:neighborhood} {p:neighborhood}",
                "filter en.listing neighborhood != {s:neighborhood}",
            ),
            tpl(
                "filter_num_ge",
                "{c:which} {c:noun} rent for {c:at_least} {n:monthly_rent} dollars",
                "filter en.listing monthly_rent >= {n:monthly_rent}",
            ),
            tpl(
                "filter_num_le",
                "{c:which} {c:noun} rent for {c:at_most} {n:monthly_rent} dollars",
                "filter en.listing monthly_rent <= {n:monthly_rent}",
            ),
            tpl(
                "count_filter",
                "{c:count} {c:noun} in the {s:neighborhood} {p:neighborhood}",
                "count filter en.listing neighborhood = {s:neighborhood}",
            ),
            tpl(
                "argmax",
                "{c:which} {c:noun} has the {c:argmax} {p:monthly_rent}",
                "argmax en.listing monthly_rent",
            ),
            tpl(
                "argmin",
                "{c:which} {c:noun} has the {c:argmin} {p:monthly_rent}",
                "argmin en.listing monthly_rent",
            ),
            tpl(
                "rel_num_ge",
                "{c:which} {c:noun} {p:size} is {c:at_least} the same as {e0}",
                "filter en.listing size >= ( getProperty {e0} size )",
            ),
            tpl(
                "same_str",
                "{c:which} {c:noun} sit in the same {p:neighborhood} as {e0}",
                "filter en.listing neighborhood = ( getProperty {e0} neighborhood )",
            ),
            tpl(
                "argmax_filtered",
                "{c:which} {s:neighborhood} {c:noun} has the {c:argmax} {p:monthly_rent}",
                "argmax filter en.listing neighborhood = {s:neighborhood} monthly_rent",
            ),
            tpl(
                "values_of_filter",
                "what are the {p:monthly_rent} values of {s:neighborhood} {c:noun}",
                "getProperty filter en.listing neighborhood = {s:neighborhood} monthly_rent",
            ),
            tpl(
                "value_of_argmax",
                "what {p:neighborhood} does the {c:argmax} {p:monthly_rent} {c:noun} have",
                "getProperty argmax en.listing monthly_rent neighborhood",
            ),
            tpl(
                "two_entity_window",
                "{c:which} {c:noun} rent for {c:at_least} that of {e0} and have {p:size} \
                 {c:at_most} that of {e1}",
                "filter filter en.listing monthly_rent >= ( getProperty {e0} monthly_rent ) \
                 size <= ( getProperty {e1} size )",
            ),
        ],
        phrasings: phrasings(&[
            ("noun", &["listings", "rentals"]),
            ("show", &["browse", "see"]),
            ("which", &["which", "what"]),
            ("count", &["count of", "the total of"]),
            ("at_least", &["not below", "upwards of"]),
            ("at_most", &["not above", "capped at"]),
            ("argmax", &["steepest", "largest"]),
            ("argmin", &["cheapest", "lowest"]),
        ]),
    };

    vec![recipes, publications, housing]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bundle_is_valid() {
        let bundle = default_bundle();
        assert_eq!(bundle.len(), 3);
        validate_bundle(&bundle).unwrap();
    }

    #[test]
    fn shared_construct_phrasings_are_disjoint_across_domains() {
        let bundle = default_bundle();
        for key in ["argmax", "at_least", "count"] {
            for a in &bundle {
                for b in &bundle {
                    if a.domain_id == b.domain_id {
                        continue;
                    }
                    for phrase in &a.phrasings[key] {
                        assert!(
                            !b.phrasings[key].contains(phrase),
                            "`{phrase}` ({key}) is shared by {} and {}",
                            a.domain_id,
                            b.domain_id
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn bundle_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bundle.json");
        let bundle = default_bundle();
        save_bundle(&bundle, &path).unwrap();
        let loaded = load_bundle(&path).unwrap();
        assert_eq!(loaded, bundle);
    }

    #[test]
    fn slot_parsing_covers_all_kinds() {
        assert_eq!(parse_slot("filter").unwrap(), None);
        assert_eq!(parse_slot("{e1}").unwrap(), Some(Slot::Entity(1)));
        assert_eq!(
            parse_slot("{n:rent}").unwrap(),
            Some(Slot::Number("rent".to_string()))
        );
        assert_eq!(
            parse_slot("{s:venue}").unwrap(),
            Some(Slot::Str("venue".to_string()))
        );
        assert_eq!(
            parse_slot("{p:size}").unwrap(),
            Some(Slot::PropSurface("size".to_string()))
        );
        assert_eq!(
            parse_slot("{c:noun}").unwrap(),
            Some(Slot::Phrase("noun".to_string()))
        );
        for bad in ["{q:x}", "{n:}", "{e1", "{zzz}"] {
            assert!(parse_slot(bad).is_err(), "expected a slot error for {bad}");
        }
    }

    #[test]
    fn bad_specs_are_rejected() {
        let mut spec = default_bundle().remove(0);
        spec.kb_size = spec.entity_names.len() + 1;
        assert!(matches!(spec.validate(), Err(DataError::BadSpec(_))));

        let mut spec = default_bundle().remove(0);
        spec.properties[0].number_range = None;
        assert!(matches!(spec.validate(), Err(DataError::BadSpec(_))));

        let mut spec = default_bundle().remove(0);
        spec.entity_names.push("rice pudding cake".to_string());
        spec.entity_names.push("pudding cake".to_string());
        assert!(matches!(spec.validate(), Err(DataError::BadSpec(_))));

        // Range too narrow for sampling without replacement.
        let mut spec = default_bundle().remove(0);
        spec.properties[0].number_range = Some(NumberRange {
            lo: 0.0,
            hi: 10.0,
            step: 1.0,
        });
        assert!(matches!(spec.validate(), Err(DataError::BadSpec(_))));
    }

    #[test]
    fn template_with_unparseable_program_is_named_in_the_error() {
        let mut spec = default_bundle().remove(0);
        spec.templates.push(tpl(
            "broken",
            "{c:show} all {c:noun}",
            "filter en.recipe cuisine",
        ));
        match spec.validate() {
            Err(DataError::BadTemplate { template, .. }) => {
                assert!(template.contains("broken"));
            }
            other => panic!("expected a template error, got {other:?}"),
        }
    }

    #[test]
    fn program_only_slots_are_rejected() {
        let mut spec = default_bundle().remove(0);
        spec.templates.push(tpl(
            "dangling",
            "{c:show} all {c:noun}",
            "filter en.recipe cooking_time >= {n:cooking_time}",
        ));
        let err = spec.validate().unwrap_err();
        assert!(matches!(err, DataError::BadSpec(msg) if msg.contains("dangling")));
    }
}
