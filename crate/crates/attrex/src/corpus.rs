//! Product-record corpus: loading, splitting and test-set sampling.
//!
//! The on-disk format is UTF-8 JSON Lines, one record per line:
//!
//! ```json
//! {"id":"p1","category":"Laptops","title":"Acer Swift 3","description":null,
//!  "annotations":[{"attribute":"Weight","surface_forms":["2.65 Pounds"],"value_in_title":true}]}
//! ```
//!
//! Test-set files use the same schema with one extra field per line,
//! `target_attribute`, naming the attribute that case asks about.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::norm::Normalizer;

/// Maps a category to the attributes configured for it.
pub type CategoryMap = BTreeMap<String, Vec<String>>;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {source}")]
    Malformed {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: invalid record: {reason}")]
    Invalid { line: usize, reason: String },
    #[error("duplicate product id {id:?} on lines {first_line} and {second_line}")]
    DuplicateId {
        id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("dataset contains no records")]
    Empty,
    #[error("split ratio components must all be positive, got {0:?}")]
    InvalidRatio([u64; 3]),
    #[error("cannot split {products} products into {partitions} partitions")]
    NotEnoughProducts { products: usize, partitions: usize },
}

/// Gold annotation of one attribute on one product.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeAnnotation {
    pub attribute: String,
    /// Accepted gold strings: the raw annotated span plus any normalized or
    /// manually added variants. Non-empty; entries unique after stripping.
    pub surface_forms: Vec<String>,
    /// Whether the value occurs in the product title. When false the record
    /// is a negative case for this attribute: the correct answer is "not
    /// extractable".
    pub value_in_title: bool,
}

/// One product offer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductRecord {
    #[serde(rename = "id")]
    pub product_id: String,
    pub category: String,
    pub title: String,
    pub description: Option<String>,
    pub annotations: Vec<AttributeAnnotation>,
}

impl ProductRecord {
    pub fn annotation(&self, attribute: &str) -> Option<&AttributeAnnotation> {
        self.annotations.iter().find(|a| a.attribute == attribute)
    }
}

/// One sampled test case: a product record paired with the attribute to ask
/// about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    #[serde(flatten)]
    pub record: ProductRecord,
    pub target_attribute: String,
}

impl TestCase {
    /// Stable identifier within a test set.
    pub fn case_id(&self) -> String {
        format!("{}::{}", self.record.product_id, self.target_attribute)
    }

    pub fn gold(&self) -> Option<&AttributeAnnotation> {
        self.record.annotation(&self.target_attribute)
    }

    /// True when the gold value occurs in the title (a positive case).
    pub fn is_positive(&self) -> bool {
        self.gold().map(|g| g.value_in_title).unwrap_or(false)
    }
}

/// Product-disjoint partitions of a corpus.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<ProductRecord>,
    pub validation: Vec<ProductRecord>,
    pub test_pool: Vec<ProductRecord>,
    pub seed: u64,
}

/// Per-cell caps for test-set sampling. A cell is one (category, attribute)
/// combination; positives are cases whose value occurs in the title.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingPolicy {
    pub max_positive_per_cell: usize,
    pub max_negative_per_cell: usize,
    pub seed: u64,
}

impl Default for SamplingPolicy {
    fn default() -> Self {
        SamplingPolicy {
            max_positive_per_cell: 40,
            max_negative_per_cell: 10,
            seed: 0,
        }
    }
}

/// Reads a JSONL corpus. Whitespace-only lines are skipped; duplicate product
/// ids are rejected, naming both offending lines.
pub fn load_records(path: &Path) -> Result<Vec<ProductRecord>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: ProductRecord =
            serde_json::from_str(&line).map_err(|source| CorpusError::Malformed {
                line: line_no,
                source,
            })?;
        sanitize_record(&mut record, line_no)?;
        if let Some(&first_line) = seen.get(&record.product_id) {
            return Err(CorpusError::DuplicateId {
                id: record.product_id,
                first_line,
                second_line: line_no,
            });
        }
        seen.insert(record.product_id.clone(), line_no);
        records.push(record);
    }
    Ok(records)
}

fn sanitize_record(record: &mut ProductRecord, line: usize) -> Result<(), CorpusError> {
    let invalid = |reason: String| CorpusError::Invalid { line, reason };
    if record.product_id.trim().is_empty() {
        return Err(invalid("field `id` is empty".into()));
    }
    if record.category.trim().is_empty() {
        return Err(invalid("field `category` is empty".into()));
    }
    for ann in &mut record.annotations {
        if ann.attribute.trim().is_empty() {
            return Err(invalid("annotation field `attribute` is empty".into()));
        }
        let mut forms = Vec::new();
        for f in &ann.surface_forms {
            let stripped = f.trim().to_string();
            if !stripped.is_empty() && !forms.contains(&stripped) {
                forms.push(stripped);
            }
        }
        if forms.is_empty() {
            return Err(invalid(format!(
                "annotation {:?}: `surface_forms` has no non-empty entry",
                ann.attribute
            )));
        }
        ann.surface_forms = forms;
    }
    Ok(())
}

/// Reads a test-set file (records plus `target_attribute`).
pub fn load_test_cases(path: &Path) -> Result<Vec<TestCase>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut cases = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let case: TestCase =
            serde_json::from_str(line).map_err(|source| CorpusError::Malformed {
                line: idx + 1,
                source,
            })?;
        cases.push(case);
    }
    Ok(cases)
}

/// Writes items as JSON Lines.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    let write_err = |source: std::io::Error| CorpusError::Write {
        path: path.display().to_string(),
        source,
    };
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("serializable item");
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(write_err)?;
    file.write_all(&out).map_err(write_err)
}

/// Splits a corpus into train/validation/test at product granularity.
///
/// Product ids are shuffled with a seeded generator and sliced by ratio, so
/// the same inputs and seed always give the same partitions. Partition sizes
/// follow the ratio by largest remainder (within ±1 product); records keep
/// their input order within each partition.
pub fn split_dataset(
    records: &[ProductRecord],
    ratio: [u64; 3],
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    if records.is_empty() {
        return Err(CorpusError::Empty);
    }
    if ratio.contains(&0) {
        return Err(CorpusError::InvalidRatio(ratio));
    }
    let mut ids: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for r in records {
        if seen.insert(r.product_id.as_str()) {
            ids.push(r.product_id.as_str());
        }
    }
    if ids.len() < 3 {
        return Err(CorpusError::NotEnoughProducts {
            products: ids.len(),
            partitions: 3,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let counts = apportion(ids.len(), ratio);
    let train_ids: HashSet<&str> = ids[..counts[0]].iter().copied().collect();
    let val_ids: HashSet<&str> = ids[counts[0]..counts[0] + counts[1]]
        .iter()
        .copied()
        .collect();
    let pick = |set: &HashSet<&str>| -> Vec<ProductRecord> {
        records
            .iter()
            .filter(|r| set.contains(r.product_id.as_str()))
            .cloned()
            .collect()
    };
    let test_ids: HashSet<&str> = ids[counts[0] + counts[1]..].iter().copied().collect();
    Ok(DatasetSplit {
        train: pick(&train_ids),
        validation: pick(&val_ids),
        test_pool: pick(&test_ids),
        seed,
    })
}

/// Largest-remainder apportionment of `n` items over three ratio weights.
fn apportion(n: usize, ratio: [u64; 3]) -> [usize; 3] {
    let total: u64 = ratio.iter().sum();
    let n64 = n as u64;
    let mut counts = [0usize; 3];
    let mut remainders = [(0u64, 0usize); 3];
    let mut assigned = 0usize;
    for (i, &r) in ratio.iter().enumerate() {
        counts[i] = (n64 * r / total) as usize;
        remainders[i] = (n64 * r % total, i);
        assigned += counts[i];
    }
    // hand leftovers to the largest remainders, earlier partitions first on ties
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for k in 0..(n - assigned) {
        counts[remainders[k].1] += 1;
    }
    counts
}

fn cell_rng(seed: u64, category: &str, attribute: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update([0]);
    h.update(category.as_bytes());
    h.update([0]);
    h.update(attribute.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Samples the stratified test set from a record pool.
///
/// For every (category, attribute) cell the pool offers, up to
/// `max_positive_per_cell` cases with the value in the title and up to
/// `max_negative_per_cell` without are drawn (seeded shuffle, take-first).
/// Records lacking an annotation for an attribute are not candidates for that
/// cell. The output is ordered by (category, attribute, product id).
pub fn sample_test_set(
    pool: &[ProductRecord],
    categories: &CategoryMap,
    policy: &SamplingPolicy,
) -> Vec<TestCase> {
    let mut cases = Vec::new();
    let mut done = BTreeSet::new();
    for (category, attributes) in categories {
        for attribute in attributes {
            if !done.insert((category.clone(), attribute.clone())) {
                continue;
            }
            let mut positives: Vec<&ProductRecord> = Vec::new();
            let mut negatives: Vec<&ProductRecord> = Vec::new();
            for record in pool.iter().filter(|r| &r.category == category) {
                match record.annotation(attribute) {
                    Some(ann) if ann.value_in_title => positives.push(record),
                    Some(_) => negatives.push(record),
                    None => {}
                }
            }
            let mut rng = cell_rng(policy.seed, category, attribute);
            for (candidates, cap) in [
                (&mut positives, policy.max_positive_per_cell),
                (&mut negatives, policy.max_negative_per_cell),
            ] {
                candidates.sort_by(|a, b| a.product_id.cmp(&b.product_id));
                candidates.shuffle(&mut rng);
                for record in candidates.iter().take(cap) {
                    cases.push(TestCase {
                        record: (*record).clone(),
                        target_attribute: attribute.clone(),
                    });
                }
            }
        }
    }
    cases.sort_by(|a, b| {
        (
            &a.record.category,
            &a.target_attribute,
            &a.record.product_id,
        )
            .cmp(&(
                &b.record.category,
                &b.target_attribute,
                &b.record.product_id,
            ))
    });
    cases
}

/// Extra accepted gold strings keyed by (product id, attribute).
#[derive(Debug, Clone, Default)]
pub struct GoldOverrides {
    entries: BTreeMap<(String, String), Vec<String>>,
}

#[derive(Debug, Deserialize)]
struct OverrideLine {
    product_id: String,
    attribute: String,
    forms: Vec<String>,
}

impl GoldOverrides {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, product_id: &str, attribute: &str, forms: Vec<String>) {
        self.entries
            .entry((product_id.to_string(), attribute.to_string()))
            .or_default()
            .extend(forms);
    }

    /// Loads overrides from a JSONL file of
    /// `{"product_id": ..., "attribute": ..., "forms": [...]}` lines.
    pub fn from_file(path: &Path) -> Result<GoldOverrides, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut overrides = GoldOverrides::default();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: OverrideLine =
                serde_json::from_str(line).map_err(|source| CorpusError::Malformed {
                    line: idx + 1,
                    source,
                })?;
            overrides.insert(&parsed.product_id, &parsed.attribute, parsed.forms);
        }
        Ok(overrides)
    }
}

/// Outcome of gold augmentation.
#[derive(Debug, Clone, Serialize)]
pub struct AugmentReport {
    /// Positive test cases considered.
    pub positive_cases: usize,
    /// Positive cases whose target gold gained at least one normalized variant.
    pub augmented_cases: usize,
    /// `augmented_cases / positive_cases` (0 when there are no positives).
    pub coverage: f64,
    pub warnings: Vec<String>,
}

/// Enriches gold surface forms in place.
///
/// Every annotation's form list becomes the union of the raw forms, their
/// rule-normalized variants and any override forms; nothing is ever removed.
/// Overrides that reference a (product, attribute) pair absent from the test
/// set produce a warning, not a failure.
pub fn augment_gold(
    cases: &mut [TestCase],
    normalizer: &Normalizer,
    overrides: &GoldOverrides,
) -> AugmentReport {
    let mut positive_cases = 0usize;
    let mut augmented_cases = 0usize;
    let mut used: BTreeSet<(String, String)> = BTreeSet::new();
    for case in cases.iter_mut() {
        let target = case.target_attribute.clone();
        let positive = case.is_positive();
        if positive {
            positive_cases += 1;
        }
        let category = case.record.category.clone();
        let product_id = case.record.product_id.clone();
        for ann in &mut case.record.annotations {
            let mut gained = false;
            for raw in ann.surface_forms.clone() {
                let normalized = normalizer.normalize(&category, &ann.attribute, &raw);
                if !normalized.is_empty()
                    && normalized != raw
                    && !ann.surface_forms.contains(&normalized)
                {
                    ann.surface_forms.push(normalized);
                    gained = true;
                }
            }
            let key = (product_id.clone(), ann.attribute.clone());
            if let Some(extra) = overrides.entries.get(&key) {
                used.insert(key);
                for form in extra {
                    let stripped = form.trim().to_string();
                    if !stripped.is_empty() && !ann.surface_forms.contains(&stripped) {
                        ann.surface_forms.push(stripped);
                    }
                }
            }
            if gained && positive && ann.attribute == target {
                augmented_cases += 1;
            }
        }
    }
    let warnings = overrides
        .entries
        .keys()
        .filter(|key| !used.contains(*key))
        .map(|(p, a)| format!("override for unknown case ({p}, {a}) ignored"))
        .collect();
    AugmentReport {
        positive_cases,
        augmented_cases,
        coverage: if positive_cases == 0 {
            0.0
        } else {
            augmented_cases as f64 / positive_cases as f64
        },
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn record(
        id: &str,
        category: &str,
        title: &str,
        annotations: Vec<AttributeAnnotation>,
    ) -> ProductRecord {
        ProductRecord {
            product_id: id.to_string(),
            category: category.to_string(),
            title: title.to_string(),
            description: None,
            annotations,
        }
    }

    pub(crate) fn ann(attribute: &str, forms: &[&str], in_title: bool) -> AttributeAnnotation {
        AttributeAnnotation {
            attribute: attribute.to_string(),
            surface_forms: forms.iter().map(|s| s.to_string()).collect(),
            value_in_title: in_title,
        }
    }

    fn write_lines(lines: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        std::fs::write(&path, lines.join("\n")).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_a_single_record() {
        let (_dir, path) = write_lines(&[
            r#"{"id":"p1","category":"Laptops","title":"Acer Swift 3","description":null,"annotations":[]}"#,
        ]);
        let records = load_records(&path).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].product_id, "p1");
        assert_eq!(records[0].category, "Laptops");
        assert_eq!(records[0].title, "Acer Swift 3");
    }

    #[test]
    fn empty_file_is_an_empty_corpus() {
        let (_dir, path) = write_lines(&[]);
        assert!(load_records(&path).unwrap().is_empty());
    }

    #[test]
    fn duplicate_ids_name_both_lines() {
        let (_dir, path) = write_lines(&[
            r#"{"id":"p1","category":"Laptops","title":"A","description":null,"annotations":[]}"#,
            r#"{"id":"p1","category":"Laptops","title":"B","description":null,"annotations":[]}"#,
        ]);
        match load_records(&path).unwrap_err() {
            CorpusError::DuplicateId {
                id,
                first_line,
                second_line,
            } => {
                assert_eq!(id, "p1");
                assert_eq!((first_line, second_line), (1, 2));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_name_the_line() {
        let (_dir, path) = write_lines(&[
            r#"{"id":"p1","category":"Laptops","title":"A","description":null,"annotations":[]}"#,
            r#"{"id":"p2","category":2}"#,
        ]);
        match load_records(&path).unwrap_err() {
            CorpusError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn annotations_without_forms_are_rejected() {
        let (_dir, path) = write_lines(&[
            r#"{"id":"p1","category":"Laptops","title":"A","description":null,"annotations":[{"attribute":"Weight","surface_forms":["  "],"value_in_title":true}]}"#,
        ]);
        assert!(matches!(
            load_records(&path).unwrap_err(),
            CorpusError::Invalid { line: 1, .. }
        ));
    }

    #[test]
    fn surface_forms_are_stripped_and_deduped() {
        let (_dir, path) = write_lines(&[
            r#"{"id":"p1","category":"Laptops","title":"A","description":null,"annotations":[{"attribute":"Weight","surface_forms":[" 2 lbs ","2 lbs"],"value_in_title":true}]}"#,
        ]);
        let records = load_records(&path).unwrap();
        assert_eq!(records[0].annotations[0].surface_forms, vec!["2 lbs"]);
    }

    fn synthetic(n: usize) -> Vec<ProductRecord> {
        (0..n)
            .map(|i| {
                record(
                    &format!("p{i:04}"),
                    "Laptops",
                    &format!("Laptop {i}"),
                    vec![ann("Weight", &["2 lbs"], i % 5 != 0)],
                )
            })
            .collect()
    }

    #[test]
    fn hundred_products_split_80_10_10() {
        let records = synthetic(100);
        let split = split_dataset(&records, [8, 1, 1], 7).unwrap();
        assert_eq!(split.train.len(), 80);
        assert_eq!(split.validation.len(), 10);
        assert_eq!(split.test_pool.len(), 10);
        let ids = |v: &[ProductRecord]| -> HashSet<String> {
            v.iter().map(|r| r.product_id.clone()).collect()
        };
        let train = ids(&split.train);
        let val = ids(&split.validation);
        let test = ids(&split.test_pool);
        assert!(train.is_disjoint(&val));
        assert!(train.is_disjoint(&test));
        assert!(val.is_disjoint(&test));
    }

    #[test]
    fn ten_products_split_8_1_1() {
        let split = split_dataset(&synthetic(10), [8, 1, 1], 7).unwrap();
        assert_eq!(
            [
                split.train.len(),
                split.validation.len(),
                split.test_pool.len()
            ],
            [8, 1, 1]
        );
    }

    #[test]
    fn same_seed_gives_identical_partitions() {
        let records = synthetic(57);
        let a = split_dataset(&records, [8, 1, 1], 42).unwrap();
        let b = split_dataset(&records, [8, 1, 1], 42).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.validation, b.validation);
        assert_eq!(a.test_pool, b.test_pool);
    }

    #[test]
    fn too_few_products_is_an_error() {
        assert!(matches!(
            split_dataset(&synthetic(2), [8, 1, 1], 7).unwrap_err(),
            CorpusError::NotEnoughProducts {
                products: 2,
                partitions: 3
            }
        ));
    }

    #[test]
    fn zero_ratio_component_is_an_error() {
        assert!(matches!(
            split_dataset(&synthetic(10), [8, 0, 2], 7).unwrap_err(),
            CorpusError::InvalidRatio(_)
        ));
    }

    fn cell_pool(positives: usize, negatives: usize) -> Vec<ProductRecord> {
        let mut pool = Vec::new();
        for i in 0..positives {
            pool.push(record(
                &format!("pos{i:03}"),
                "Memory Cards",
                "Card",
                vec![ann("Capacity", &["8 Gigabytes"], true)],
            ));
        }
        for i in 0..negatives {
            pool.push(record(
                &format!("neg{i:03}"),
                "Memory Cards",
                "Card",
                vec![ann("Capacity", &["8 Gigabytes"], false)],
            ));
        }
        pool
    }

    fn card_categories() -> CategoryMap {
        let mut map = CategoryMap::new();
        map.insert("Memory Cards".into(), vec!["Capacity".into()]);
        map
    }

    #[test]
    fn caps_bind_at_40_and_10() {
        let pool = cell_pool(55, 12);
        let cases = sample_test_set(&pool, &card_categories(), &SamplingPolicy::default());
        let positives = cases.iter().filter(|c| c.is_positive()).count();
        assert_eq!(positives, 40);
        assert_eq!(cases.len() - positives, 10);
    }

    #[test]
    fn caps_do_not_bind_on_small_cells() {
        let pool = cell_pool(7, 3);
        let cases = sample_test_set(&pool, &card_categories(), &SamplingPolicy::default());
        assert_eq!(cases.len(), 10);
    }

    #[test]
    fn output_is_ordered_and_deterministic() {
        let pool = cell_pool(15, 5);
        let policy = SamplingPolicy {
            max_positive_per_cell: 8,
            max_negative_per_cell: 3,
            seed: 11,
        };
        let a = sample_test_set(&pool, &card_categories(), &policy);
        let b = sample_test_set(&pool, &card_categories(), &policy);
        assert_eq!(a, b);
        let keys: Vec<_> = a
            .iter()
            .map(|c| {
                (
                    c.record.category.clone(),
                    c.target_attribute.clone(),
                    c.record.product_id.clone(),
                )
            })
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn records_without_the_attribute_are_not_candidates() {
        let mut pool = cell_pool(2, 1);
        pool.push(record("other", "Memory Cards", "Card", vec![]));
        let cases = sample_test_set(&pool, &card_categories(), &SamplingPolicy::default());
        assert_eq!(cases.len(), 3);
    }

    fn capacity_case() -> TestCase {
        TestCase {
            record: record(
                "p1",
                "Memory Cards",
                "SanDisk 8 Gigabytes",
                vec![ann("Capacity", &["8 Gigabytes"], true)],
            ),
            target_attribute: "Capacity".into(),
        }
    }

    #[test]
    fn augmentation_adds_normalized_variants() {
        let mut cases = vec![capacity_case()];
        let report = augment_gold(
            &mut cases,
            &Normalizer::with_default_rules(),
            &GoldOverrides::default(),
        );
        assert_eq!(
            cases[0].gold().unwrap().surface_forms,
            vec!["8 Gigabytes".to_string(), "8GB".to_string()]
        );
        assert_eq!(report.positive_cases, 1);
        assert_eq!(report.augmented_cases, 1);
        assert!((report.coverage - 1.0).abs() < 1e-12);
    }

    #[test]
    fn augmentation_handles_word_numbered_cores() {
        let mut cases = vec![TestCase {
            record: record(
                "p1",
                "Laptops",
                "Dual-Core Laptop",
                vec![ann("No. Cores", &["Dual-Core"], true)],
            ),
            target_attribute: "No. Cores".into(),
        }];
        augment_gold(
            &mut cases,
            &Normalizer::with_default_rules(),
            &GoldOverrides::default(),
        );
        assert_eq!(
            cases[0].gold().unwrap().surface_forms,
            vec!["Dual-Core".to_string(), "2".to_string()]
        );
    }

    #[test]
    fn already_canonical_forms_stay_unchanged() {
        let mut cases = vec![TestCase {
            record: record(
                "p1",
                "Memory Cards",
                "Card",
                vec![ann("Capacity", &["8GB"], true)],
            ),
            target_attribute: "Capacity".into(),
        }];
        let report = augment_gold(
            &mut cases,
            &Normalizer::with_default_rules(),
            &GoldOverrides::default(),
        );
        assert_eq!(cases[0].gold().unwrap().surface_forms, vec!["8GB"]);
        assert_eq!(report.augmented_cases, 0);
    }

    #[test]
    fn unknown_overrides_warn_but_do_not_fail() {
        let mut cases = vec![capacity_case()];
        let mut overrides = GoldOverrides::default();
        overrides.insert("p1", "Capacity", vec!["8 GB".into()]);
        overrides.insert("ghost", "Capacity", vec!["x".into()]);
        let report = augment_gold(&mut cases, &Normalizer::with_default_rules(), &overrides);
        assert!(cases[0]
            .gold()
            .unwrap()
            .surface_forms
            .contains(&"8 GB".to_string()));
        assert_eq!(report.warnings.len(), 1);
        assert!(report.warnings[0].contains("ghost"));
    }

    #[test]
    fn test_case_round_trips_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test_set.jsonl");
        let cases = vec![capacity_case()];
        write_jsonl(&path, &cases).unwrap();
        let loaded = load_test_cases(&path).unwrap();
        assert_eq!(loaded, cases);
    }

    proptest! {
        #[test]
        fn splits_are_disjoint_and_ratio_true(n in 3usize..400, seed in 0u64..1000) {
            let records = synthetic(n);
            let split = split_dataset(&records, [8, 1, 1], seed).unwrap();
            let total = split.train.len() + split.validation.len() + split.test_pool.len();
            prop_assert_eq!(total, n);
            let mut all: Vec<&str> = Vec::new();
            for part in [&split.train, &split.validation, &split.test_pool] {
                all.extend(part.iter().map(|r| r.product_id.as_str()));
            }
            let unique: HashSet<&str> = all.iter().copied().collect();
            prop_assert_eq!(unique.len(), all.len());
            for (len, r) in [
                (split.train.len(), 8u64),
                (split.validation.len(), 1),
                (split.test_pool.len(), 1),
            ] {
                let ideal = n as f64 * r as f64 / 10.0;
                prop_assert!((len as f64 - ideal).abs() <= 1.0);
            }
        }

        #[test]
        fn per_cell_caps_are_never_exceeded(pos in 0usize..60, neg in 0usize..20, seed in 0u64..100) {
            let pool = cell_pool(pos, neg);
            let policy = SamplingPolicy { seed, ..SamplingPolicy::default() };
            let cases = sample_test_set(&pool, &card_categories(), &policy);
            let positives = cases.iter().filter(|c| c.is_positive()).count();
            prop_assert!(positives <= 40);
            prop_assert!(cases.len() - positives <= 10);
            prop_assert_eq!(positives, pos.min(40));
            prop_assert_eq!(cases.len() - positives, neg.min(10));
        }

        #[test]
        fn augmentation_never_removes_forms(raw in "[A-Za-z0-9 .-]{1,20}") {
            let mut cases = vec![TestCase {
                record: record("p1", "Laptops", "T", vec![ann("Battery Life", &[raw.as_str()], true)]),
                target_attribute: "Battery Life".into(),
            }];
            let before: Vec<String> = cases[0].gold().map(|g| g.surface_forms.clone()).unwrap_or_default();
            augment_gold(&mut cases, &Normalizer::with_default_rules(), &GoldOverrides::default());
            if let Some(g) = cases[0].gold() {
                for form in &before {
                    prop_assert!(g.surface_forms.contains(form));
                }
            }
        }
    }
}
