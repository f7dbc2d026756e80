//! Demonstration selection for in-context learning.
//!
//! Demonstrations come from the training partition, share the query's product
//! category and never include the query product itself. For three and six
//! shots, two-thirds of the demonstrations have the attribute value in the
//! title and one-third do not; a single shot is value-present (a value-absent
//! example alone cannot demonstrate the extraction format). Demonstration
//! answers use the rule-normalized form of the first gold surface form.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::corpus::{CategoryMap, ProductRecord, TestCase};
use crate::norm::Normalizer;

use super::PromptError;

/// Whether demonstrations show a single attribute's answer or the full pair
/// list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoKind {
    Closed,
    Open,
}

/// One rendered-ready demonstration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demonstration {
    pub product_id: String,
    pub category: String,
    pub title: String,
    /// Whether the demonstrated attribute's value occurs in the title.
    pub value_present: bool,
    pub payload: DemoPayload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DemoPayload {
    /// A single attribute and its gold answer (the unknown marker when the
    /// value is absent from the title).
    Closed { attribute: String, answer: String },
    /// All configured attribute/value pairs present in the title. Empty when
    /// nothing is extractable.
    Open { pairs: Vec<(String, String)> },
}

/// Selection result plus any degradation warnings.
#[derive(Debug, Clone)]
pub struct DemoSelection {
    pub demos: Vec<Demonstration>,
    pub warnings: Vec<String>,
}

/// Target polarity counts: ⌈2k/3⌉ value-present, ⌊k/3⌋ value-absent.
pub fn polarity_targets(k: usize) -> (usize, usize) {
    let present = (2 * k).div_ceil(3);
    (present, k - present)
}

/// Everything demonstration rendering needs besides the pool.
pub struct DemoContext<'a> {
    pub normalizer: &'a Normalizer,
    pub unknown_marker: &'a str,
    pub categories: &'a CategoryMap,
}

/// Derives a per-case selection seed from a base seed, so each test case sees
/// its own demonstrations while the whole run stays reproducible.
pub fn demo_seed_for_case(base: u64, case_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update([0]);
    h.update(case_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// Picks `k` demonstrations for `query` from `pool`.
///
/// Candidates must share the query's category, differ from the query product
/// and carry an annotation for the query attribute. When one polarity runs
/// short the other fills in, with a warning; an empty candidate set is an
/// error.
pub fn select_demonstrations(
    pool: &[ProductRecord],
    query: &TestCase,
    k: usize,
    seed: u64,
    kind: DemoKind,
    ctx: &DemoContext<'_>,
) -> Result<DemoSelection, PromptError> {
    if k == 0 {
        return Err(PromptError::InvalidShots(0));
    }
    let category = &query.record.category;
    let attribute = &query.target_attribute;
    let mut present: Vec<&ProductRecord> = Vec::new();
    let mut absent: Vec<&ProductRecord> = Vec::new();
    for record in pool {
        if &record.category != category || record.product_id == query.record.product_id {
            continue;
        }
        match record.annotation(attribute) {
            Some(ann) if ann.value_in_title => present.push(record),
            Some(_) => absent.push(record),
            None => {}
        }
    }
    if present.is_empty() && absent.is_empty() {
        return Err(PromptError::EmptyPool {
            category: category.clone(),
            attribute: attribute.clone(),
        });
    }
    present.sort_by(|a, b| a.product_id.cmp(&b.product_id));
    absent.sort_by(|a, b| a.product_id.cmp(&b.product_id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    present.shuffle(&mut rng);
    absent.shuffle(&mut rng);

    let (want_present, want_absent) = polarity_targets(k);
    let take_present = want_present.min(present.len());
    let take_absent = want_absent.min(absent.len());
    let mut chosen: Vec<&ProductRecord> = Vec::new();
    chosen.extend(&present[..take_present]);
    chosen.extend(&absent[..take_absent]);

    let mut warnings = Vec::new();
    if take_present < want_present {
        warnings.push(format!(
            "{category}/{attribute}: only {take_present} of {want_present} value-present demonstrations available"
        ));
    }
    if take_absent < want_absent {
        warnings.push(format!(
            "{category}/{attribute}: only {take_absent} of {want_absent} value-absent demonstrations available"
        ));
    }
    // backfill missing slots with whatever polarity is left
    let mut leftovers = present[take_present..]
        .iter()
        .chain(absent[take_absent..].iter());
    while chosen.len() < k {
        match leftovers.next() {
            Some(r) => chosen.push(r),
            None => {
                warnings.push(format!(
                    "{category}/{attribute}: pool exhausted, {} of {k} demonstrations selected",
                    chosen.len()
                ));
                break;
            }
        }
    }
    // value-present demonstrations first
    chosen.sort_by_key(|r| {
        !r.annotation(attribute)
            .map(|a| a.value_in_title)
            .unwrap_or(false)
    });

    let demos = chosen
        .into_iter()
        .map(|record| materialize(record, attribute, kind, ctx))
        .collect();
    Ok(DemoSelection { demos, warnings })
}

fn materialize(
    record: &ProductRecord,
    attribute: &str,
    kind: DemoKind,
    ctx: &DemoContext<'_>,
) -> Demonstration {
    let ann = record
        .annotation(attribute)
        .expect("candidates carry the query attribute");
    let payload = match kind {
        DemoKind::Closed => DemoPayload::Closed {
            attribute: attribute.to_string(),
            answer: if ann.value_in_title {
                preferred_form(
                    ctx.normalizer,
                    &record.category,
                    ann.attribute.as_str(),
                    &ann.surface_forms,
                )
            } else {
                ctx.unknown_marker.to_string()
            },
        },
        DemoKind::Open => {
            let configured = ctx.categories.get(&record.category);
            let pairs = record
                .annotations
                .iter()
                .filter(|a| a.value_in_title)
                .filter(|a| {
                    configured
                        .map(|list| list.contains(&a.attribute))
                        .unwrap_or(true)
                })
                .map(|a| {
                    (
                        a.attribute.clone(),
                        preferred_form(
                            ctx.normalizer,
                            &record.category,
                            &a.attribute,
                            &a.surface_forms,
                        ),
                    )
                })
                .collect();
            DemoPayload::Open { pairs }
        }
    };
    Demonstration {
        product_id: record.product_id.clone(),
        category: record.category.clone(),
        title: record.title.clone(),
        value_present: ann.value_in_title,
        payload,
    }
}

fn preferred_form(
    normalizer: &Normalizer,
    category: &str,
    attribute: &str,
    forms: &[String],
) -> String {
    normalizer.normalize(category, attribute, &forms[0])
}
