//! Corpus generation: sample a knowledge base per domain, instantiate the
//! domain's templates against it, mask entities, and split the results.
//!
//! Generation is a single deterministic pass under a fixed seed. Instances
//! whose denotation is empty are resampled (an empty answer makes a useless
//! reward signal), as are exact duplicates.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::mask::{mask_entities, surface_words, unmask};
use crate::data::spec::{parse_slot, pattern_slots, validate_bundle, DomainSpec, Slot};
use crate::error::DataError;
use crate::lang::{execute, format_number, is_placeholder, parse_program, Denotation};
use crate::lang::{KnowledgeBase, Value, ValueKind};

/// One training/evaluation example, stored in masked form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub domain: String,
    pub utterance: Vec<String>,
    pub program: Vec<String>,
    pub entity_map: BTreeMap<String, String>,
    pub denotation: Denotation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Dev, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// A generated multi-domain corpus. `train` is the optimization split, `dev`
/// drives early stopping, `val` is held out untouched, and `test` is for the
/// final comparison. Each split holds every domain's instances.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Corpus {
    pub kbs: BTreeMap<String, KnowledgeBase>,
    pub train: Vec<Instance>,
    pub dev: Vec<Instance>,
    pub val: Vec<Instance>,
    pub test: Vec<Instance>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> &[Instance] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn domains(&self) -> Vec<String> {
        self.kbs.keys().cloned().collect()
    }

    pub fn kb(&self, domain: &str) -> Result<&KnowledgeBase, DataError> {
        self.kbs
            .get(domain)
            .ok_or_else(|| DataError::Io(format!("no knowledge base for domain `{domain}`")))
    }

    pub fn for_domain<'a>(&'a self, split: Split, domain: &str) -> Vec<&'a Instance> {
        self.split(split).iter().filter(|i| i.domain == domain).collect()
    }

    /// Every instance must execute to its stored denotation, and every
    /// program placeholder must be bound and spoken in the utterance.
    pub fn self_check(&self) -> Result<(), DataError> {
        for split in Split::ALL {
            for (idx, inst) in self.split(split).iter().enumerate() {
                let name = format!("{}/{}[{idx}]", inst.domain, split.as_str());
                let fail = |detail: String| {
                    Err(DataError::Inconsistent {
                        instance: name.clone(),
                        detail,
                    })
                };
                let kb = self.kb(&inst.domain)?;
                for tok in &inst.program {
                    if is_placeholder(tok) {
                        if !inst.entity_map.contains_key(tok) {
                            return fail(format!("placeholder `{tok}` is unbound"));
                        }
                        if !inst.utterance.contains(tok) {
                            return fail(format!("placeholder `{tok}` is not in the utterance"));
                        }
                    }
                }
                let expr = match parse_program(&inst.program) {
                    Ok(expr) => expr,
                    Err(e) => return fail(format!("gold program does not parse: {e}")),
                };
                match execute(&expr, kb, &inst.entity_map) {
                    Ok(d) if d == inst.denotation => {}
                    Ok(d) => {
                        return fail(format!(
                            "gold program executes to {d:?}, stored {:?}",
                            inst.denotation
                        ))
                    }
                    Err(e) => return fail(format!("gold program fails to execute: {e}")),
                }
            }
        }
        Ok(())
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), DataError> {
        let io = |e: std::io::Error, what: &str| DataError::Io(format!("{what}: {e}"));
        fs::create_dir_all(dir.join("kb")).map_err(|e| io(e, "creating the corpus directory"))?;
        for split in Split::ALL {
            let mut text = String::new();
            for inst in self.split(split) {
                let line = serde_json::to_string(inst)
                    .map_err(|e| DataError::Io(format!("encoding an instance: {e}")))?;
                text.push_str(&line);
                text.push('\n');
            }
            let path = dir.join(format!("{}.jsonl", split.as_str()));
            fs::write(&path, text).map_err(|e| io(e, &format!("writing {}", path.display())))?;
        }
        for (domain, kb) in &self.kbs {
            kb.save(&dir.join("kb").join(format!("{domain}.json")))?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Corpus, DataError> {
        let read_split = |split: Split| -> Result<Vec<Instance>, DataError> {
            let path = dir.join(format!("{}.jsonl", split.as_str()));
            let text = fs::read_to_string(&path)
                .map_err(|e| DataError::Io(format!("reading {}: {e}", path.display())))?;
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|line| {
                    serde_json::from_str(line)
                        .map_err(|e| DataError::Io(format!("decoding {}: {e}", path.display())))
                })
                .collect()
        };
        let kb_dir = dir.join("kb");
        let entries = fs::read_dir(&kb_dir)
            .map_err(|e| DataError::Io(format!("reading {}: {e}", kb_dir.display())))?;
        let mut kbs = BTreeMap::new();
        for entry in entries {
            let path = entry
                .map_err(|e| DataError::Io(format!("reading {}: {e}", kb_dir.display())))?
                .path();
            if path.extension().is_some_and(|ext| ext == "json") {
                let kb = KnowledgeBase::load(&path)?;
                kbs.insert(kb.domain_id.clone(), kb);
            }
        }
        if kbs.is_empty() {
            return Err(DataError::Io(format!(
                "no knowledge bases under {}",
                kb_dir.display()
            )));
        }
        Ok(Corpus {
            kbs,
            train: read_split(Split::Train)?,
            dev: read_split(Split::Dev)?,
            val: read_split(Split::Val)?,
            test: read_split(Split::Test)?,
        })
    }
}

/// Sample a knowledge base for one domain. Numeric values are drawn without
/// replacement (the spec guarantees the range is wide enough), so every
/// superlative question has a unique winner; string values repeat freely.
pub fn generate_kb(spec: &DomainSpec, rng: &mut ChaCha8Rng) -> Result<KnowledgeBase, DataError> {
    let mut ids: Vec<String> = spec
        .entity_names
        .choose_multiple(rng, spec.kb_size)
        .map(|name| format!("{}.{}", spec.entity_type, name.replace(' ', "_")))
        .collect();
    ids.sort();

    let mut columns: BTreeMap<&str, Vec<Value>> = BTreeMap::new();
    for prop in &spec.properties {
        let column: Vec<Value> = match prop.kind {
            ValueKind::Number => {
                let pool = prop
                    .number_range
                    .as_ref()
                    .expect("validated: number properties carry a range")
                    .values();
                pool.choose_multiple(rng, spec.kb_size)
                    .map(|v| Value::Number(*v))
                    .collect()
            }
            ValueKind::Str => (0..spec.kb_size)
                .map(|_| {
                    Value::Str(
                        prop.string_values
                            .choose(rng)
                            .expect("validated: string properties carry values")
                            .clone(),
                    )
                })
                .collect(),
            ValueKind::EntityRef => {
                return Err(DataError::BadSpec(format!(
                    "property `{}`: the generator does not sample entity-ref properties",
                    prop.name
                )))
            }
        };
        columns.insert(&prop.name, column);
    }

    let mut entities = BTreeMap::new();
    for (row, id) in ids.iter().enumerate() {
        let props: BTreeMap<String, Value> = spec
            .properties
            .iter()
            .map(|p| (p.name.clone(), columns[p.name.as_str()][row].clone()))
            .collect();
        entities.insert(id.clone(), props);
    }
    let kb = KnowledgeBase {
        domain_id: spec.domain_id.clone(),
        entity_type: spec.entity_type.clone(),
        properties: spec
            .properties
            .iter()
            .map(|p| (p.name.clone(), p.kind))
            .collect(),
        entities,
    };
    kb.validate()?;
    Ok(kb)
}

/// One sampled assignment for a template's slots.
struct Binding {
    entities: Vec<String>,
    numbers: BTreeMap<String, f64>,
    strings: BTreeMap<String, String>,
    phrases: BTreeMap<String, String>,
}

fn bind_slots(
    slots: &BTreeSet<Slot>,
    spec: &DomainSpec,
    kb: &KnowledgeBase,
    rng: &mut ChaCha8Rng,
) -> Binding {
    let entity_count = slots
        .iter()
        .filter_map(|s| match s {
            Slot::Entity(i) => Some(i + 1),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let ids: Vec<&String> = kb.entities.keys().collect();
    let entities: Vec<String> = ids
        .choose_multiple(rng, entity_count)
        .map(|id| (*id).clone())
        .collect();

    let mut numbers = BTreeMap::new();
    let mut strings = BTreeMap::new();
    let mut phrases = BTreeMap::new();
    for slot in slots {
        match slot {
            Slot::Number(prop) => {
                // Draw from the KB's actual values so the filter is satisfiable.
                let row = rng.gen_range(0..kb.entities.len());
                let value = kb
                    .entities
                    .values()
                    .nth(row)
                    .and_then(|props| props[prop].as_number())
                    .expect("validated: numeric property present on every entity");
                numbers.insert(prop.clone(), value);
            }
            Slot::Str(prop) => {
                let row = rng.gen_range(0..kb.entities.len());
                let Some(Value::Str(value)) = kb.entities.values().nth(row).map(|p| &p[prop])
                else {
                    unreachable!("validated: string property present on every entity");
                };
                strings.insert(prop.clone(), value.clone());
            }
            Slot::Phrase(key) => {
                let phrase = spec.phrasings[key]
                    .choose(rng)
                    .expect("validated: phrasing lists are non-empty");
                phrases.insert(key.clone(), phrase.clone());
            }
            Slot::Entity(_) | Slot::PropSurface(_) => {}
        }
    }
    Binding {
        entities,
        numbers,
        strings,
        phrases,
    }
}

fn render(
    pattern: &str,
    binding: &Binding,
    spec: &DomainSpec,
    kb: &KnowledgeBase,
    surface: bool,
) -> Result<Vec<String>, DataError> {
    let mut out = Vec::new();
    for tok in pattern.split_whitespace() {
        match parse_slot(tok)? {
            None => out.push(tok.to_string()),
            Some(Slot::Entity(i)) => {
                let id = &binding.entities[i];
                if surface {
                    out.extend(surface_words(kb, id)?);
                } else {
                    out.push(id.clone());
                }
            }
            Some(Slot::Number(prop)) => out.push(format_number(binding.numbers[&prop])),
            Some(Slot::Str(prop)) => out.push(binding.strings[&prop].clone()),
            Some(Slot::PropSurface(prop)) => {
                let surface_text = &spec
                    .property(&prop)
                    .expect("validated: surface slots name real properties")
                    .surface;
                out.extend(surface_text.split_whitespace().map(str::to_string));
            }
            Some(Slot::Phrase(key)) => {
                out.extend(binding.phrases[&key].split_whitespace().map(str::to_string));
            }
        }
    }
    Ok(out)
}

/// How many sampling attempts each requested instance is worth before the
/// domain is declared too small to produce the corpus.
const ATTEMPTS_PER_INSTANCE: usize = 200;

fn generate_domain(
    spec: &DomainSpec,
    per_domain: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(KnowledgeBase, Vec<Instance>), DataError> {
    let kb = generate_kb(spec, rng)?;
    let slots_per_template: Vec<BTreeSet<Slot>> = spec
        .templates
        .iter()
        .map(|t| {
            let mut slots = BTreeSet::new();
            slots.extend(pattern_slots(&t.surface)?);
            slots.extend(pattern_slots(&t.program)?);
            Ok(slots)
        })
        .collect::<Result<_, DataError>>()?;

    let mut seen = BTreeSet::new();
    let mut instances = Vec::with_capacity(per_domain);
    let mut attempts = 0usize;
    let budget = per_domain * ATTEMPTS_PER_INSTANCE;
    while instances.len() < per_domain {
        attempts += 1;
        if attempts > budget {
            return Err(DataError::BadSpec(format!(
                "domain `{}` produced only {} of {per_domain} distinct non-empty instances \
                 in {budget} attempts",
                spec.domain_id,
                instances.len()
            )));
        }
        let t = rng.gen_range(0..spec.templates.len());
        let template = &spec.templates[t];
        let binding = bind_slots(&slots_per_template[t], spec, &kb, rng);
        let raw_utt = render(&template.surface, &binding, spec, &kb, true)?;
        let raw_prog = render(&template.program, &binding, spec, &kb, false)?;

        let (utterance, program, entity_map) = mask_entities(&raw_utt, &raw_prog, &kb)?;
        let expr = parse_program(&program).map_err(|source| DataError::BadTemplate {
            template: format!("{}/{}", spec.domain_id, template.name),
            source,
        })?;
        let denotation = execute(&expr, &kb, &entity_map).map_err(|e| DataError::Inconsistent {
            instance: format!("{}/{}", spec.domain_id, template.name),
            detail: format!("template instantiation fails to execute: {e}"),
        })?;
        if denotation.is_empty() {
            continue;
        }
        let key = (utterance.join(" "), program.join(" "));
        if !seen.insert(key) {
            continue;
        }
        instances.push(Instance {
            domain: spec.domain_id.clone(),
            utterance,
            program,
            entity_map,
            denotation,
        });
    }
    Ok((kb, instances))
}

/// Generate the full multi-domain corpus: an 80/10/10 train-pool/val/test
/// split per domain, with the pool further split 80/20 into train/dev.
pub fn generate_corpus(
    specs: &[DomainSpec],
    per_domain: usize,
    seed: u64,
) -> Result<Corpus, DataError> {
    if per_domain < 10 {
        return Err(DataError::BadSpec(format!(
            "per-domain count {per_domain} is below the minimum of 10"
        )));
    }
    validate_bundle(specs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Corpus {
        kbs: BTreeMap::new(),
        train: Vec::new(),
        dev: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for spec in specs {
        let (kb, instances) = generate_domain(spec, per_domain, &mut rng)?;
        let n = instances.len();
        let n_test = n / 10;
        let n_val = n / 10;
        let pool = n - n_test - n_val;
        let n_dev = pool / 5;
        let n_train = pool - n_dev;
        corpus.train.extend_from_slice(&instances[..n_train]);
        corpus.dev.extend_from_slice(&instances[n_train..pool]);
        corpus.val.extend_from_slice(&instances[pool..pool + n_val]);
        corpus.test.extend_from_slice(&instances[pool + n_val..]);
        corpus.kbs.insert(spec.domain_id.clone(), kb);
    }
    corpus.self_check()?;
    Ok(corpus)
}

/// Restore an instance's raw surface forms (entity names in the utterance,
/// entity ids in the program).
pub fn unmask_instance(
    inst: &Instance,
    kb: &KnowledgeBase,
) -> Result<(Vec<String>, Vec<String>), DataError> {
    unmask(&inst.utterance, &inst.program, &inst.entity_map, kb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::spec::default_bundle;

    fn small_corpus(seed: u64) -> Corpus {
        generate_corpus(&default_bundle(), 50, seed).unwrap()
    }

    #[test]
    fn generation_is_deterministic() {
        let a = small_corpus(17);
        let b = small_corpus(17);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = small_corpus(18);
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap()
        );
    }

    #[test]
    fn split_sizes_follow_the_contract() {
        let corpus = generate_corpus(&default_bundle(), 100, 7).unwrap();
        for domain in corpus.domains() {
            assert_eq!(corpus.for_domain(Split::Test, &domain).len(), 10);
            assert_eq!(corpus.for_domain(Split::Val, &domain).len(), 10);
            assert_eq!(corpus.for_domain(Split::Dev, &domain).len(), 16);
            assert_eq!(corpus.for_domain(Split::Train, &domain).len(), 64);
        }
    }

    #[test]
    fn every_instance_is_self_consistent_and_non_empty() {
        let corpus = small_corpus(3);
        corpus.self_check().unwrap();
        for split in Split::ALL {
            for inst in corpus.split(split) {
                assert!(!inst.denotation.is_empty(), "empty denotation in corpus");
            }
        }
    }

    #[test]
    fn masking_round_trips_on_every_generated_instance() {
        let corpus = small_corpus(11);
        for split in Split::ALL {
            for inst in corpus.split(split) {
                let kb = corpus.kb(&inst.domain).unwrap();
                let (raw_u, raw_p) = unmask_instance(inst, kb).unwrap();
                let (mu, mp, map) = mask_entities(&raw_u, &raw_p, kb).unwrap();
                assert_eq!(mu, inst.utterance);
                assert_eq!(mp, inst.program);
                assert_eq!(map, inst.entity_map);
            }
        }
    }

    #[test]
    fn corpus_round_trips_through_disk() {
        let corpus = small_corpus(5);
        let dir = tempfile::tempdir().unwrap();
        corpus.save_dir(dir.path()).unwrap();
        let loaded = Corpus::load_dir(dir.path()).unwrap();
        assert_eq!(
            serde_json::to_string(&corpus).unwrap(),
            serde_json::to_string(&loaded).unwrap()
        );
        loaded.self_check().unwrap();
    }

    #[test]
    fn saving_twice_is_byte_identical() {
        let corpus = small_corpus(5);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        corpus.save_dir(a.path()).unwrap();
        corpus.save_dir(b.path()).unwrap();
        for split in Split::ALL {
            let name = format!("{}.jsonl", split.as_str());
            assert_eq!(
                fs::read(a.path().join(&name)).unwrap(),
                fs::read(b.path().join(&name)).unwrap()
            );
        }
    }

    #[test]
    fn shared_constructs_appear_in_multiple_domains() {
        let corpus = small_corpus(9);
        for construct in ["argmax", ">=", "count"] {
            let domains: BTreeSet<&str> = corpus
                .train
                .iter()
                .filter(|i| i.program.iter().any(|t| t == construct))
                .map(|i| i.domain.as_str())
                .collect();
            assert!(
                domains.len() >= 2,
                "construct `{construct}` appears in {domains:?}"
            );
        }
    }

    #[test]
    fn too_small_a_request_is_rejected() {
        let err = generate_corpus(&default_bundle(), 9, 1).unwrap_err();
        assert!(matches!(err, DataError::BadSpec(_)));
    }

    #[test]
    fn exhausted_domains_fail_loudly() {
        let mut spec = default_bundle().remove(0);
        // One slot-free template supports exactly one distinct instance.
        spec.templates.truncate(0);
        spec.templates.push(crate::data::spec::TemplateSpec {
            name: "count_all".to_string(),
            surface: "how many recipes are there".to_string(),
            program: "count en.recipe".to_string(),
        });
        let err = generate_corpus(&[spec], 10, 1).unwrap_err();
        assert!(
            matches!(err, DataError::BadSpec(msg) if msg.contains("distinct")),
            "expected exhaustion"
        );
    }

    #[test]
    fn impossible_templates_fail_loudly() {
        let mut spec = default_bundle().remove(0);
        spec.properties[2].string_values = vec!["only".to_string()];
        spec.templates.truncate(0);
        spec.templates.push(crate::data::spec::TemplateSpec {
            name: "never".to_string(),
            surface: "which recipes are not {s:cuisine} cuisine".to_string(),
            program: "filter en.recipe cuisine != {s:cuisine}".to_string(),
        });
        let err = generate_corpus(&[spec], 10, 1).unwrap_err();
        assert!(matches!(err, DataError::BadSpec(_)));
    }

    #[test]
    fn superlatives_have_unique_winners() {
        // Numeric columns are sampled without replacement, so a bare argmax
        // or argmin answer is always a single entity.
        let corpus = small_corpus(13);
        for inst in &corpus.train {
            let is_bare_superlative = inst.program.len() == 3
                && (inst.program[0] == "argmax" || inst.program[0] == "argmin");
            if is_bare_superlative {
                match &inst.denotation {
                    Denotation::Entities(set) => assert_eq!(set.len(), 1),
                    other => panic!("superlative produced {other:?}"),
                }
            }
        }
    }
}
