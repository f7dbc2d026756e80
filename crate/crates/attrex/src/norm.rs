//! Value normalization.
//!
//! Chat models tend to return canonical unit spellings ("8GB") where catalog
//! annotations carry longhand ones ("8 Gigabytes"). A [`Normalizer`] rewrites a
//! raw value to its canonical form via an ordered rule list, so gold answers can
//! accept both spellings.
//!
//! Rules can be scoped to a category and/or attribute and are tried in order;
//! rewriting repeats until a fixpoint so that normalizing an already-normalized
//! value is a no-op. The shipped defaults cover the common unit families
//! (megapixels, gigabytes, hours, inches, word-numbered core counts); extra
//! rules load from a TOML file:
//!
//! ```toml
//! [[rule]]
//! category = "Laptops"        # optional scope
//! attribute = "Weight"        # optional scope
//! pattern = '(?i)(\d+(?:\.\d+)?)\s*pounds?\b'
//! replacement = "$1 lbs"
//! ```

use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NormError {
    #[error("failed to read rule file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse rule file {path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
    #[error("invalid pattern {pattern:?}: {source}")]
    Pattern {
        pattern: String,
        source: Box<regex::Error>,
    },
}

/// One rewrite rule: a regex pattern and a `$1`-style replacement, optionally
/// scoped to a category and/or attribute.
///
/// A rule must be idempotent: applying it to its own output must change
/// nothing. All shipped defaults satisfy this.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    pub pattern: String,
    pub replacement: String,
}

#[derive(Debug, Clone, Deserialize)]
struct RuleFile {
    #[serde(default, rename = "rule")]
    rules: Vec<RuleSpec>,
}

#[derive(Debug, Clone)]
struct CompiledRule {
    spec: RuleSpec,
    regex: Regex,
}

impl CompiledRule {
    fn applies_to(&self, category: &str, attribute: &str) -> bool {
        self.spec.category.as_deref().is_none_or(|c| c == category)
            && self
                .spec
                .attribute
                .as_deref()
                .is_none_or(|a| a == attribute)
    }
}

/// Ordered rule list applied to raw values. Earlier rules win.
#[derive(Debug, Clone)]
pub struct Normalizer {
    rules: Vec<CompiledRule>,
}

/// Rewrite passes are bounded so a misbehaving user rule set cannot loop.
const MAX_PASSES: usize = 8;

impl Normalizer {
    /// The shipped default rules.
    pub fn with_default_rules() -> Normalizer {
        Normalizer::from_specs(default_rules()).expect("default rules compile")
    }

    /// Compiles an explicit rule list, in order.
    pub fn from_specs(specs: Vec<RuleSpec>) -> Result<Normalizer, NormError> {
        let rules = specs
            .into_iter()
            .map(|spec| {
                let regex = Regex::new(&spec.pattern).map_err(|e| NormError::Pattern {
                    pattern: spec.pattern.clone(),
                    source: Box::new(e),
                })?;
                Ok(CompiledRule { spec, regex })
            })
            .collect::<Result<Vec<_>, NormError>>()?;
        Ok(Normalizer { rules })
    }

    /// Loads user rules from a TOML file. User rules are tried before the
    /// shipped defaults.
    pub fn from_file(path: &Path) -> Result<Normalizer, NormError> {
        let text = std::fs::read_to_string(path).map_err(|source| NormError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: RuleFile = toml::from_str(&text).map_err(|source| NormError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        let mut specs = file.rules;
        specs.extend(default_rules());
        Normalizer::from_specs(specs)
    }

    /// Rewrites `raw` to its canonical form for the given category/attribute.
    ///
    /// The first in-scope rule whose pattern matches is applied (replacing all
    /// occurrences); this repeats until no rule changes the value, so the
    /// result is a fixpoint: `normalize(normalize(x)) == normalize(x)`.
    /// With no matching rule the trimmed input is returned unchanged.
    pub fn normalize(&self, category: &str, attribute: &str, raw: &str) -> String {
        let mut current = raw.trim().to_string();
        for _ in 0..MAX_PASSES {
            let next = self
                .rules
                .iter()
                .find(|r| r.applies_to(category, attribute) && r.regex.is_match(&current))
                .map(|r| {
                    r.regex
                        .replace_all(&current, r.spec.replacement.as_str())
                        .trim()
                        .to_string()
                });
            match next {
                Some(n) if n != current => current = n,
                _ => break,
            }
        }
        current
    }

    pub fn rule_specs(&self) -> Vec<RuleSpec> {
        self.rules.iter().map(|r| r.spec.clone()).collect()
    }
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer::with_default_rules()
    }
}

fn unscoped(pattern: &str, replacement: &str) -> RuleSpec {
    RuleSpec {
        category: None,
        attribute: None,
        pattern: pattern.to_string(),
        replacement: replacement.to_string(),
    }
}

/// Default unit rewrites.
pub fn default_rules() -> Vec<RuleSpec> {
    vec![
        unscoped(r"(?i)(\d+(?:\.\d+)?)\s*megapixels?\b", "${1}MP"),
        unscoped(r"(?i)(\d+(?:\.\d+)?)\s*gigabytes?\b", "${1}GB"),
        unscoped(r"(?i)(\d+(?:\.\d+)?)\s*hour\b", "$1 Hours"),
        unscoped(r"(?i)(\d+(?:\.\d+)?)[\s-]*inch(?:es)?\b", "$1 inches"),
        unscoped(r"(?i)\bdual[\s-]?core\b", "2"),
        unscoped(r"(?i)\bquad[\s-]?core\b", "4"),
        unscoped(r"(?i)\bhexa[\s-]?core\b", "6"),
        unscoped(r"(?i)\bocta[\s-]?core\b", "8"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm() -> Normalizer {
        Normalizer::with_default_rules()
    }

    #[test]
    fn canonical_unit_rewrites() {
        let n = norm();
        assert_eq!(
            n.normalize("Digital Camera", "Resolution", "2 Megapixel"),
            "2MP"
        );
        assert_eq!(n.normalize("Laptops", "No. Cores", "Dual-Core"), "2");
        assert_eq!(n.normalize("Laptops", "Battery Life", "8 Hour"), "8 Hours");
        assert_eq!(
            n.normalize("Laptops", "Screen Size", "13.3-Inch"),
            "13.3 inches"
        );
        assert_eq!(
            n.normalize("Memory Cards", "Capacity", "8 Gigabytes"),
            "8GB"
        );
    }

    #[test]
    fn unmatched_values_pass_through_trimmed() {
        let n = norm();
        assert_eq!(n.normalize("Laptops", "Weight", "  4.4 lbs "), "4.4 lbs");
        assert_eq!(
            n.normalize("Laptops", "Weight", "already-canonical"),
            "already-canonical"
        );
    }

    #[test]
    fn canonical_forms_are_fixpoints() {
        let n = norm();
        for v in ["2MP", "8GB", "8 Hours", "13.3 inches", "2", "10 MP"] {
            assert_eq!(n.normalize("x", "y", v), v);
        }
    }

    #[test]
    fn multi_unit_strings_reach_a_fixpoint() {
        let n = norm();
        let once = n.normalize("x", "y", "2 Megapixel 8 Hour");
        assert_eq!(once, "2MP 8 Hours");
        assert_eq!(n.normalize("x", "y", &once), once);
    }

    #[test]
    fn scoped_rules_only_fire_in_scope() {
        let mut specs = vec![RuleSpec {
            category: Some("Laptops".into()),
            attribute: Some("Weight".into()),
            pattern: r"(?i)(\d+(?:\.\d+)?)\s*pounds?\b".into(),
            replacement: "$1 lbs".into(),
        }];
        specs.extend(default_rules());
        let n = Normalizer::from_specs(specs).unwrap();
        assert_eq!(n.normalize("Laptops", "Weight", "4.4 Pounds"), "4.4 lbs");
        assert_eq!(
            n.normalize("Laptops", "Battery Life", "4.4 Pounds"),
            "4.4 Pounds"
        );
    }

    #[test]
    fn first_matching_rule_wins() {
        let specs = vec![unscoped("a", "x"), unscoped("a", "y")];
        let n = Normalizer::from_specs(specs).unwrap();
        assert_eq!(n.normalize("c", "t", "a"), "x");
    }

    #[test]
    fn bad_pattern_is_rejected() {
        let err = Normalizer::from_specs(vec![unscoped("(", "x")]).unwrap_err();
        assert!(matches!(err, NormError::Pattern { .. }));
    }

    #[test]
    fn rule_file_prepends_user_rules() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rules.toml");
        std::fs::write(
            &path,
            r#"
[[rule]]
pattern = '(?i)(\d+(?:\.\d+)?)\s*megapixels?\b'
replacement = "$1 megapix"
"#,
        )
        .unwrap();
        let n = Normalizer::from_file(&path).unwrap();
        assert_eq!(n.normalize("c", "a", "2 Megapixel"), "2 megapix");
        // defaults still present behind the user rule
        assert_eq!(n.normalize("c", "a", "8 Gigabytes"), "8GB");
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(raw in "\\PC{0,40}") {
            let n = norm();
            let once = n.normalize("Laptops", "Battery Life", &raw);
            prop_assert_eq!(n.normalize("Laptops", "Battery Life", &once), once.clone());
        }
    }
}
