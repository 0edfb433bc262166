//! Synthetic corpus generation, entity masking, parse normalization, and
//! corpus statistics.

pub mod gen;
pub mod mask;
pub mod normalize;
pub mod spec;
pub mod stats;

pub use gen::{generate_corpus, generate_kb, unmask_instance, Corpus, Instance, Split};
pub use mask::{mask_entities, surface_words, unmask};
pub use normalize::{canonical_ldcs, denormalize, normalize_external};
pub use spec::{
    default_bundle, load_bundle, save_bundle, validate_bundle, DomainSpec, NumberRange,
    PropertySpec, TemplateSpec,
};
pub use stats::{corpus_stats, DomainStats};
