//! Parsing of raw model responses.
//!
//! Closed extraction expects the whole response to be the attribute value (or
//! the unknown marker); no substring extraction is attempted, so a chatty
//! answer like "The resolution is 10 MP" simply fails the later exact match.
//! Open extraction parses line-oriented `Attribute: Value` output.

use serde::{Deserialize, Serialize};

/// Parsed result of a closed-extraction response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClosedAnswer {
    /// A non-empty, whitespace-stripped value.
    Value(String),
    /// The model declared the value not derivable (or said nothing).
    NotFound,
}

impl ClosedAnswer {
    pub fn value(&self) -> Option<&str> {
        match self {
            ClosedAnswer::Value(v) => Some(v),
            ClosedAnswer::NotFound => None,
        }
    }
}

/// Strips the response and classifies it.
///
/// The empty string and the unknown marker (compared case-insensitively)
/// become [`ClosedAnswer::NotFound`]; anything else is kept verbatim.
pub fn parse_closed(response_text: &str, unknown_marker: &str) -> ClosedAnswer {
    let stripped = response_text.trim();
    if stripped.is_empty() || stripped.to_lowercase() == unknown_marker.trim().to_lowercase() {
        ClosedAnswer::NotFound
    } else {
        ClosedAnswer::Value(stripped.to_string())
    }
}

/// Ordered attribute/value pairs parsed from an open-extraction response.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairList {
    pub pairs: Vec<(String, String)>,
    /// Non-empty lines that carried no parsable pair.
    pub unparsed_lines: usize,
    /// Attribute names that occurred more than once.
    pub duplicate_attributes: Vec<String>,
}

impl PairList {
    pub fn from_pairs(pairs: Vec<(String, String)>) -> PairList {
        let duplicate_attributes = find_duplicates(&pairs);
        PairList {
            pairs,
            unparsed_lines: 0,
            duplicate_attributes,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Renders the canonical line format, one `Attribute: Value` per line.
    pub fn render(&self) -> String {
        self.pairs
            .iter()
            .map(|(a, v)| format!("{a}: {v}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn find_duplicates(pairs: &[(String, String)]) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    let mut dups = Vec::new();
    for (attr, _) in pairs {
        if !seen.insert(attr.clone()) && !dups.contains(attr) {
            dups.push(attr.clone());
        }
    }
    dups
}

/// Parses an open-extraction response into a [`PairList`].
///
/// Accepted shapes:
/// - `Attribute: Value` lines, split on the first colon, both sides stripped;
///   leading list bullets (`- `, `* `, `1. `, `1) `) are tolerated,
/// - a single flat `{"Attribute": "Value", ...}` object.
///
/// Total: every input yields a `PairList`. Non-empty lines without a colon
/// (or with an empty attribute name) are skipped and counted in
/// `unparsed_lines`; pair order follows line order.
pub fn parse_open(response_text: &str) -> PairList {
    let trimmed = response_text.trim();
    if trimmed.starts_with('{') && trimmed.ends_with('}') {
        if let Ok(map) = serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(trimmed)
        {
            return pairs_from_object(map);
        }
    }
    let mut pairs = Vec::new();
    let mut unparsed = 0usize;
    for line in trimmed.lines() {
        let line = strip_bullet(line.trim());
        if line.is_empty() {
            continue;
        }
        match line.split_once(':') {
            Some((attr, value)) if !attr.trim().is_empty() => {
                pairs.push((attr.trim().to_string(), value.trim().to_string()));
            }
            _ => unparsed += 1,
        }
    }
    let duplicate_attributes = find_duplicates(&pairs);
    PairList {
        pairs,
        unparsed_lines: unparsed,
        duplicate_attributes,
    }
}

fn pairs_from_object(map: serde_json::Map<String, serde_json::Value>) -> PairList {
    let mut pairs = Vec::new();
    let mut unparsed = 0usize;
    for (key, value) in map {
        let attr = key.trim().to_string();
        if attr.is_empty() {
            unparsed += 1;
            continue;
        }
        let rendered = match value {
            serde_json::Value::String(s) => s.trim().to_string(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Bool(b) => b.to_string(),
            // nested structures are not a flat pair
            _ => {
                unparsed += 1;
                continue;
            }
        };
        pairs.push((attr, rendered));
    }
    let duplicate_attributes = find_duplicates(&pairs);
    PairList {
        pairs,
        unparsed_lines: unparsed,
        duplicate_attributes,
    }
}

fn strip_bullet(line: &str) -> &str {
    if let Some(rest) = line.strip_prefix("- ").or_else(|| line.strip_prefix("* ")) {
        return rest.trim_start();
    }
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return r.trim_start();
        }
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_answers_are_stripped() {
        assert_eq!(
            parse_closed("  10 MP\n", "n/a"),
            ClosedAnswer::Value("10 MP".into())
        );
    }

    #[test]
    fn unknown_marker_is_case_insensitive() {
        assert_eq!(parse_closed("n/a", "n/a"), ClosedAnswer::NotFound);
        assert_eq!(parse_closed(" N/A ", "n/a"), ClosedAnswer::NotFound);
        assert_eq!(parse_closed("", "n/a"), ClosedAnswer::NotFound);
        assert_eq!(parse_closed("   ", "n/a"), ClosedAnswer::NotFound);
    }

    #[test]
    fn chatty_answers_are_kept_whole() {
        assert_eq!(
            parse_closed("The resolution is 10 MP", "n/a"),
            ClosedAnswer::Value("The resolution is 10 MP".into())
        );
    }

    #[test]
    fn open_lines_parse_in_order() {
        let p = parse_open("Brand: Canon\nMegapixels: 10");
        assert_eq!(
            p.pairs,
            vec![
                ("Brand".into(), "Canon".into()),
                ("Megapixels".into(), "10".into())
            ]
        );
        assert_eq!(p.unparsed_lines, 0);
    }

    #[test]
    fn empty_input_is_empty() {
        let p = parse_open("");
        assert!(p.is_empty());
        assert_eq!(p.unparsed_lines, 0);
    }

    #[test]
    fn bullets_are_tolerated_and_prose_is_counted() {
        let p = parse_open("- Capacity: 8GB\nsome prose line");
        assert_eq!(p.pairs, vec![("Capacity".into(), "8GB".into())]);
        assert_eq!(p.unparsed_lines, 1);
    }

    #[test]
    fn numbered_bullets_are_tolerated() {
        let p = parse_open("1. Brand: Canon\n2) Resolution: 10 MP");
        assert_eq!(
            p.pairs,
            vec![
                ("Brand".into(), "Canon".into()),
                ("Resolution".into(), "10 MP".into())
            ]
        );
    }

    #[test]
    fn splits_on_first_colon_only() {
        let p = parse_open("Aspect Ratio: 16:9");
        assert_eq!(p.pairs, vec![("Aspect Ratio".into(), "16:9".into())]);
    }

    #[test]
    fn flat_json_object_is_accepted_in_key_order() {
        let p = parse_open(r#"{"Brand": "Canon", "Megapixels": 10, "Specs": {"x": 1}}"#);
        assert_eq!(
            p.pairs,
            vec![
                ("Brand".into(), "Canon".into()),
                ("Megapixels".into(), "10".into())
            ]
        );
        assert_eq!(p.unparsed_lines, 1);
    }

    #[test]
    fn empty_attribute_names_are_unparsed() {
        let p = parse_open(": orphan value");
        assert!(p.pairs.is_empty());
        assert_eq!(p.unparsed_lines, 1);
    }

    #[test]
    fn duplicate_attributes_are_flagged() {
        let p = parse_open("Brand: Canon\nBrand: Nikon");
        assert_eq!(p.pairs.len(), 2);
        assert_eq!(p.duplicate_attributes, vec!["Brand".to_string()]);
    }

    proptest! {
        #[test]
        fn closed_never_yields_empty_or_padded_values(text in "\\PC{0,40}", marker in "[a-z/]{1,5}") {
            if let ClosedAnswer::Value(v) = parse_closed(&text, &marker) {
                prop_assert!(!v.is_empty());
                prop_assert_eq!(v.trim(), v.as_str());
            }
        }

        #[test]
        fn canonical_render_round_trips(
            pairs in proptest::collection::vec(
                ("[A-Za-z][A-Za-z0-9 ]{0,10}", "[A-Za-z0-9][A-Za-z0-9 :./]{0,12}"),
                0..6
            )
        ) {
            let pairs: Vec<(String, String)> = pairs
                .into_iter()
                .map(|(a, v)| (a.trim().to_string(), v.trim().to_string()))
                .filter(|(a, _)| !a.is_empty())
                .collect();
            let list = PairList::from_pairs(pairs);
            let reparsed = parse_open(&list.render());
            prop_assert_eq!(reparsed.pairs, list.pairs);
            prop_assert_eq!(reparsed.unparsed_lines, 0);
        }

        #[test]
        fn open_parsing_is_total(text in "\\PC{0,120}") {
            let _ = parse_open(&text);
        }
    }
}
